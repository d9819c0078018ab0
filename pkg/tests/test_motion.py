import numpy as np
import pytest

from tricraft import motion as M
from tricraft.tensor import Tensor

from gradcheck import rel_error


def make_set(points, w=64, h=32):
    pts = np.asarray(points, dtype=np.float64)
    return M.TrajectorySet(pts, pts.shape[1], w, h)


def test_displacements_subtraction():
    v = M.displacements([[10.0, 20.0], [13.0, 24.0]])
    np.testing.assert_allclose(v, [[3.0, 4.0]])


def test_displacements_static():
    v = M.displacements([[5.0, 5.0]] * 4)
    np.testing.assert_array_equal(v, np.zeros((3, 2)))


def test_displacements_telescoping():
    rng = np.random.default_rng(0)
    track = rng.random((10, 2)) * 20
    v = M.displacements(track)
    np.testing.assert_allclose(v.sum(axis=0), track[-1] - track[0], atol=1e-12)


def test_displacements_too_short():
    with pytest.raises(ValueError):
        M.displacements([[1.0, 1.0]])


def test_scatter_single_track_two_nonzero():
    trajs = make_set([[[10, 20], [13, 24], [15, 25]]], w=64, h=32)
    field = M.scatter_flow(trajs).values
    assert field.shape == (3, 32, 64, 2)
    np.testing.assert_array_equal(field[0], 0.0)
    nz = np.nonzero(np.abs(field).sum(axis=3))
    assert len(nz[0]) == 2
    np.testing.assert_allclose(field[1, 20, 10], [3.0, 4.0])
    np.testing.assert_allclose(field[2, 24, 13], [2.0, 1.0])


def test_scatter_empty_set():
    trajs = M.TrajectorySet(np.zeros((0, 5, 2)), 5, 64, 32)
    field = M.scatter_flow(trajs)
    np.testing.assert_array_equal(field.values, 0.0)


def test_scatter_matches_dictionary_oracle():
    rng = np.random.default_rng(1)
    f, w, h = 6, 48, 24
    pts = np.stack([
        np.cumsum(rng.uniform(-2, 2, size=(5, f, 2)), axis=1) + [20, 10]
    ])[0]
    pts[..., 0] = np.clip(pts[..., 0], 0, w - 1e-6)
    pts[..., 1] = np.clip(pts[..., 1], 0, h - 1e-6)
    trajs = M.TrajectorySet(pts, f, w, h)
    field = M.scatter_flow(trajs).values

    ref = {}
    for n in range(5):
        for t in range(f - 1):
            x = min(int(np.floor(pts[n, t, 0] + 0.5)), w - 1)
            y = min(int(np.floor(pts[n, t, 1] + 0.5)), h - 1)
            v = pts[n, t + 1] - pts[n, t]
            key = (t + 1, y, x)
            ref[key] = ref.get(key, np.zeros(2)) + v
    expect = np.zeros((f, h, w, 2), dtype=np.float32)
    for (t, y, x), v in ref.items():
        expect[t, y, x] = v.astype(np.float32)
    np.testing.assert_allclose(field, expect, atol=1e-5)


def test_scatter_collisions_sum():
    pts = np.array([
        [[10.0, 10.0], [12.0, 10.0]],
        [[10.2, 9.9], [9.0, 10.0]],
    ])
    trajs = M.TrajectorySet(pts, 2, 32, 32)
    field = M.scatter_flow(trajs).values
    np.testing.assert_allclose(field[1, 10, 10], [2.0 + (-1.2), 0.0 + 0.1], atol=1e-6)


def test_scatter_linearity_exact():
    # scaling every displacement by 2 with fixed step origins scales the
    # field exactly; two-frame tracks keep origins pinned under scaling
    rng = np.random.default_rng(2)
    starts = rng.uniform(4, 20, size=(6, 2))
    vels = rng.uniform(-2, 2, size=(6, 2))
    pts = np.stack([starts, starts + vels], axis=1)
    pts2 = np.stack([starts, starts + 2.0 * vels], axis=1)
    base = M.scatter_flow(M.TrajectorySet(pts, 2, 32, 32)).values
    doubled = M.scatter_flow(M.TrajectorySet(pts2, 2, 32, 32)).values
    np.testing.assert_array_equal(doubled, 2.0 * base)


def test_trajectory_bounds_validation():
    with pytest.raises(ValueError):
        make_set([[[70.0, 10.0], [10.0, 10.0]]], w=64, h=32)
    with pytest.raises(ValueError):
        make_set([[[10.0, -1.0], [10.0, 10.0]]], w=64, h=32)


def test_smooth_zero_field():
    field = M.FlowField(np.zeros((3, 16, 16, 2), dtype=np.float32))
    out = M.gaussian_smooth(field, 2.0)
    np.testing.assert_array_equal(out.values, 0.0)


def test_smooth_mass_conservation():
    arr = np.zeros((2, 33, 33, 2), dtype=np.float32)
    arr[1, 16, 16, 0] = 1.0
    out = M.gaussian_smooth(M.FlowField(arr), 3.0)
    assert abs(out.values[1, :, :, 0].sum() - 1.0) < 1e-6
    np.testing.assert_array_equal(out.values[0], 0.0)


def test_smooth_tiny_sigma_identity():
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((2, 8, 8, 2)).astype(np.float32)
    out = M.gaussian_smooth(M.FlowField(arr), 0.05)
    np.testing.assert_allclose(out.values, arr, atol=1e-6)


def test_smooth_matches_direct_2d_convolution():
    rng = np.random.default_rng(4)
    sigma = 1.5
    arr = rng.standard_normal((1, 20, 24, 2)).astype(np.float32)
    out = M.gaussian_smooth(M.FlowField(arr), sigma).values

    radius = int(3.0 * sigma + 0.5)
    xs = np.arange(-radius, radius + 1)
    k1 = np.exp(-0.5 * (xs / sigma) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    ref = np.zeros_like(arr)
    pad = np.pad(arr, ((0, 0), (radius, radius), (radius, radius), (0, 0)))
    for y in range(20):
        for x in range(24):
            for c in range(2):
                ref[0, y, x, c] = (pad[0, y : y + 2 * radius + 1, x : x + 2 * radius + 1, c] * k2).sum()
    np.testing.assert_allclose(out, ref, atol=1e-5)


def test_smooth_commutes_with_horizontal_flip():
    rng = np.random.default_rng(5)
    arr = rng.standard_normal((2, 12, 18, 2)).astype(np.float32)
    a = M.gaussian_smooth(M.FlowField(arr), 2.0).values[:, :, ::-1]
    b = M.gaussian_smooth(M.FlowField(np.ascontiguousarray(arr[:, :, ::-1])), 2.0).values
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_smooth_translation_equivariance():
    rng = np.random.default_rng(6)
    arr = np.zeros((1, 32, 32, 2), dtype=np.float32)
    arr[0, 12:16, 12:16] = rng.standard_normal((4, 4, 2)).astype(np.float32)
    shifted = np.roll(arr, shift=(3, 4), axis=(1, 2))
    a = M.gaussian_smooth(M.FlowField(arr), 1.5).values
    b = M.gaussian_smooth(M.FlowField(shifted), 1.5).values
    np.testing.assert_allclose(np.roll(a, shift=(3, 4), axis=(1, 2)), b, atol=1e-6)


def test_default_sigma_scaling():
    assert M.default_sigma(320, 512) == pytest.approx(4.0)
    assert M.default_sigma(32, 64) == pytest.approx(0.4)


def test_objmotionnet_scales_and_channels():
    rng = np.random.default_rng(7)
    net = M.ObjMotionNet(rng, channels=(8, 12, 16, 24))
    field = M.FlowField(rng.standard_normal((3, 16, 32, 2)).astype(np.float32))
    feats = net(field)
    shapes = [tuple(f.shape) for f in feats]
    assert shapes == [(3, 8, 16, 32), (3, 12, 8, 16), (3, 16, 4, 8), (3, 24, 2, 4)]


def test_objmotionnet_zero_field_zero_features():
    rng = np.random.default_rng(8)
    net = M.ObjMotionNet(rng, channels=(8, 12, 16, 24))
    field = M.FlowField(np.zeros((2, 16, 16, 2), dtype=np.float32))
    for f in net(field):
        np.testing.assert_array_equal(f.data, 0.0)
    # stays exact even after the projections move away from zero
    for p in net.parameters():
        p.tensor.data = p.tensor.data + 0.05
    for f in net(field):
        np.testing.assert_array_equal(f.data, 0.0)


def test_objmotionnet_indivisible_extents():
    rng = np.random.default_rng(9)
    net = M.ObjMotionNet(rng, channels=(8, 12, 16, 24))
    with pytest.raises(ValueError):
        net(M.FlowField(np.zeros((1, 12, 16, 2), dtype=np.float32)))


def test_objmotionnet_gradcheck():
    rng = np.random.default_rng(10)
    net = M.ObjMotionNet(rng, channels=(4, 6, 8, 10))
    for p in net.parameters():  # randomize so zero-init projs carry gradient
        p.tensor.data = rng.standard_normal(p.data.shape)
        p.tensor.data = p.tensor.data.astype(np.float64)
    x = rng.standard_normal((1, 8, 8, 2))
    w = [rng.standard_normal((1, c, 8 // 2**s, 8 // 2**s)) for s, c in enumerate([4, 6, 8, 10])]

    def loss_value():
        feats = net(Tensor(x, dtype=np.float64))
        total = None
        for f, wi in zip(feats, w):
            term = (f * Tensor(wi, dtype=np.float64)).sum()
            total = term if total is None else total + term
        return total

    loss = loss_value()
    loss.backward()
    params = net.parameters()
    for p in params[:3]:
        ana = p.tensor.grad
        num = np.zeros_like(p.data)
        flat, nflat = p.data.reshape(-1), num.reshape(-1)
        idx = np.random.default_rng(11).choice(flat.size, size=min(10, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + 1e-3
            fp = float(loss_value().data)
            flat[i] = orig - 1e-3
            fm = float(loss_value().data)
            flat[i] = orig
            nflat[i] = (fp - fm) / 2e-3
        mask = np.zeros(flat.size, dtype=bool)
        mask[idx] = True
        err = rel_error(ana.reshape(-1)[mask], nflat[mask])
        assert err < 1e-4


def test_downsample_field_average():
    arr = np.arange(2 * 4 * 8 * 2, dtype=np.float32).reshape(2, 4, 8, 2)
    out = M.downsample_field(M.FlowField(arr), 2)
    assert out.values.shape == (2, 2, 4, 2)
    np.testing.assert_allclose(out.values[0, 0, 0, 0], arr[0, 0:2, 0:2, 0].mean())


def test_trajectory_json_roundtrip(tmp_path):
    trajs = make_set([[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]])
    path = tmp_path / "tracks.json"
    M.save_trajectories(path, trajs)
    back = M.load_trajectories(path)
    assert back.frame_count == 2 and back.width == 64 and back.height == 32
    np.testing.assert_allclose(back.points, trajs.points)
    assert back.ids == trajs.ids
