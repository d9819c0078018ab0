import numpy as np
import pytest

from tricraft import tensor as T
from tricraft.tensor import NonFiniteError, Tensor

from gradcheck import check_case, op_cases

CASES = op_cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_gradcheck_smoke(name):
    rng = np.random.default_rng(hash(name) % (2**32))
    for _ in range(3):
        check_case(CASES[name], rng)


def test_matmul_identity():
    m = np.arange(9, dtype=np.float32).reshape(3, 3)
    out = T.matmul(Tensor(np.eye(3, dtype=np.float32)), Tensor(m))
    np.testing.assert_array_equal(out.data, m)


def test_matmul_hand():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    np.testing.assert_allclose(T.matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_softmax_symmetry():
    out = T.softmax(Tensor([0.0, 0.0, 0.0]), axis=-1)
    np.testing.assert_allclose(out.data, np.full(3, 1 / 3), atol=1e-7)


def test_softmax_stability():
    out = T.softmax(Tensor([1000.0, 0.0]), axis=-1)
    np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-6)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    for scale in (1.0, 1e3):
        x = Tensor(rng.standard_normal((5, 7)) * scale)
        out = T.softmax(x, axis=-1)
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(5), atol=1e-6)
        assert (out.data >= 0).all()


def test_conv2d_one_by_one_identity():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((1, 1, 5, 6)).astype(np.float32))
    w = Tensor(np.ones((1, 1, 1, 1), dtype=np.float32))
    out = T.conv2d(x, w, stride=1, padding="same")
    np.testing.assert_allclose(out.data, x.data, atol=1e-6)


def test_conv2d_impulse_response():
    x = np.zeros((1, 1, 7, 7), dtype=np.float32)
    x[0, 0, 3, 3] = 1.0
    k = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
    out = T.conv2d(Tensor(x), Tensor(k), stride=1, padding="same").data
    # correlation of an impulse reproduces the flipped kernel footprint
    patch = out[0, 0, 2:5, 2:5]
    np.testing.assert_allclose(patch, k[0, 0, ::-1, ::-1])
    assert out.sum() == pytest.approx(k.sum())


def test_conv2d_kernel_too_large():
    with pytest.raises(ValueError):
        T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))), padding="valid")


def test_attention_single_key():
    rng = np.random.default_rng(2)
    q = Tensor(rng.standard_normal((4, 3)))
    k = Tensor(rng.standard_normal((1, 3)))
    v = Tensor(rng.standard_normal((1, 5)))
    out = T.attention(q, k, v).data
    for row in out:
        np.testing.assert_allclose(row, v.data[0], atol=1e-6)


def test_attention_zero_values():
    rng = np.random.default_rng(3)
    q = Tensor(rng.standard_normal((4, 3)))
    k = Tensor(rng.standard_normal((6, 3)))
    v = Tensor(np.zeros((6, 5)))
    out = T.attention(q, k, v).data
    np.testing.assert_array_equal(out, np.zeros((4, 5)))


def test_attention_matches_formula_bitwise():
    rng = np.random.default_rng(4)
    q = rng.standard_normal((4, 2)).astype(np.float32)
    k = rng.standard_normal((3, 2)).astype(np.float32)
    v = rng.standard_normal((3, 3)).astype(np.float32)
    out = T.attention(Tensor(q), Tensor(k), Tensor(v)).data
    scores = (q @ k.T) / np.sqrt(np.float64(2)).astype(np.float32)
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    ref = (e / e.sum(axis=-1, keepdims=True)) @ v
    np.testing.assert_array_equal(out, ref)


def test_attention_empty_keys():
    with pytest.raises(ValueError):
        T.attention(Tensor(np.zeros((2, 3))), Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 4))))


def test_forward_determinism():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((16, 16)).astype(np.float32)
    b = rng.standard_normal((16, 16)).astype(np.float32)
    r1 = T.matmul(T.silu(Tensor(a)), Tensor(b)).data
    r2 = T.matmul(T.silu(Tensor(a)), Tensor(b)).data
    np.testing.assert_array_equal(r1, r2)


def test_nonfinite_raises():
    with np.errstate(all="ignore"):
        with pytest.raises(NonFiniteError):
            T.exp(Tensor(np.array([1000.0], dtype=np.float32)))
        with pytest.raises(NonFiniteError):
            T.div(Tensor(np.ones(3)), Tensor(np.zeros(3)))


def test_adam_zero_grad_no_move():
    p = Tensor(np.array([1.0, -2.0, 3.0], dtype=np.float32), requires_grad=True)
    before = p.data.copy()
    state = {}
    for _ in range(5):
        T.adam_step(p, np.zeros_like(p.data), state, lr=0.1)
    np.testing.assert_array_equal(p.data, before)


def test_adam_moves_with_grad():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    T.adam_step(p, np.array([1.0], dtype=np.float32), {}, lr=0.1)
    assert p.data[0] < 1.0


def test_no_grad_blocks_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with T.no_grad():
        y = T.mul(x, 2.0)
    assert y._backward is None and not y.requires_grad


def test_grad_accumulates_over_backwards():
    x = Tensor(np.array([2.0]), requires_grad=True)
    for _ in range(2):
        y = T.mul(x, x)
        y.backward()
    np.testing.assert_allclose(x.grad, [8.0])


def test_tnsr_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    for dtype in (np.float32, np.float64):
        arr = rng.standard_normal((3, 4, 2)).astype(dtype)
        path = tmp_path / f"x_{np.dtype(dtype).name}.tnsr"
        T.save_tnsr(path, arr)
        back = T.load_tnsr(path)
        assert back.dtype == dtype
        np.testing.assert_array_equal(back, arr)


def test_tnsr_header_layout(tmp_path):
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "h.tnsr"
    T.save_tnsr(path, arr)
    raw = path.read_bytes()
    assert raw[:5] == b"TNSR1"
    assert raw[5] == 0 and raw[6] == 2
    assert int.from_bytes(raw[7:15], "little") == 2
    assert int.from_bytes(raw[15:23], "little") == 3
    assert len(raw) == 23 + 6 * 4


def test_tnsr_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.tnsr"
    path.write_bytes(b"NOPE!" + b"\x00" * 16)
    with pytest.raises(ValueError):
        T.load_tnsr(path)
