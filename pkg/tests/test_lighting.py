import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from tricraft import geometry as G
from tricraft import lighting as L


def rand_pose(rng):
    r = Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()
    return G.Pose(r, rng.standard_normal(3) * 0.3)


def rand_unit(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def test_propagate_identity_chain():
    rng = np.random.default_rng(0)
    pose = rand_pose(rng)
    l_ref = rand_unit(rng)
    spec = L.propagate_light(l_ref, pose, [pose] * 5)
    for d in spec.directions:
        np.testing.assert_allclose(d, l_ref, atol=1e-9)


def test_propagate_90deg_rotation_matches_matrix_oracle():
    e_ref = G.Pose.identity()
    # 90 degrees about camera y: +z maps to +x
    r = Rotation.from_euler("y", 90, degrees=True).as_matrix()
    e_f = G.Pose(r, np.zeros(3))
    spec = L.propagate_light([0.0, 0.0, 1.0], e_ref, [e_f])
    expected = e_f.matrix() @ np.array([0.0, 0.0, 1.0, 1.0])
    expected = expected[:3] / np.linalg.norm(expected[:3])
    np.testing.assert_allclose(spec.directions[0], expected, atol=1e-12)
    np.testing.assert_allclose(spec.directions[0], [1.0, 0.0, 0.0], atol=1e-9)


def test_propagate_output_norms():
    rng = np.random.default_rng(1)
    for _ in range(100):
        e_ref = rand_pose(rng)
        e_f = rand_pose(rng)
        spec = L.propagate_light(rand_unit(rng), e_ref, [e_ref, e_f])
        np.testing.assert_allclose(np.linalg.norm(spec.directions, axis=1), 1.0, atol=1e-6)


def test_propagate_world_rotation_equivariance():
    rng = np.random.default_rng(2)
    for _ in range(20):
        e_ref = rand_pose(rng)
        traj = [e_ref] + [rand_pose(rng) for _ in range(3)]
        l_ref = rand_unit(rng)
        base = L.propagate_light(l_ref, e_ref, traj)
        g = rand_pose(rng)
        g_inv = G.pose_inverse(g)
        traj_rot = [G.compose(p, g_inv) for p in traj]
        moved = L.propagate_light(l_ref, traj_rot[0], traj_rot)
        np.testing.assert_allclose(moved.directions, base.directions, atol=1e-6)


def test_propagate_degenerate_raises():
    e_ref = G.Pose.identity()
    # move the frame camera onto the world-space light point
    l = np.array([0.0, 0.0, 1.0])
    e_f = G.Pose(np.eye(3), -l)
    with pytest.raises(ValueError, match="light at camera origin"):
        L.propagate_light(l, e_ref, [e_f])


def test_propagate_rotation_only_mode():
    rng = np.random.default_rng(3)
    e_ref = rand_pose(rng)
    e_f = rand_pose(rng)
    l_ref = rand_unit(rng)
    spec = L.propagate_light(l_ref, e_ref, [e_f], rotation_only=True)
    expected = e_f.rotation @ (e_ref.rotation.T @ l_ref)
    np.testing.assert_allclose(spec.directions[0], expected, atol=1e-12)


def test_sh_length_and_l0():
    sh = L.sh_encode([0.0, 0.0, 1.0])
    assert len(sh.coeffs) == 16
    assert sh.coeffs[0] == pytest.approx(0.2820948, abs=1e-6)


def test_sh_rejects_non_unit():
    with pytest.raises(ValueError):
        L.sh_encode([0.0, 0.0, 2.0])


def test_sh_against_closed_form_table():
    rng = np.random.default_rng(4)
    for _ in range(20):
        d = rand_unit(rng)
        x, y, z = d
        c = L.sh_encode(d).coeffs
        assert c[1] == pytest.approx(0.4886025119 * y, abs=1e-9)
        assert c[2] == pytest.approx(0.4886025119 * z, abs=1e-9)
        assert c[3] == pytest.approx(0.4886025119 * x, abs=1e-9)
        assert c[4] == pytest.approx(1.0925484306 * x * y, abs=1e-9)
        assert c[6] == pytest.approx(0.3153915653 * (3 * z * z - 1), abs=1e-9)
        assert c[8] == pytest.approx(0.5462742153 * (x * x - y * y), abs=1e-9)
        assert c[12] == pytest.approx(0.3731763325 * z * (5 * z * z - 3), abs=1e-9)
        assert c[15] == pytest.approx(0.5900435899 * x * (x * x - 3 * y * y), abs=1e-9)


def test_sh_band_energy_rotation_invariant():
    rng = np.random.default_rng(5)
    bands = [(0, 1), (1, 4), (4, 9), (9, 16)]
    for _ in range(50):
        d = rand_unit(rng)
        r = Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()
        c1 = L.sh_encode(d).coeffs
        c2 = L.sh_encode(r @ d).coeffs
        for a, b in bands:
            e1 = np.sum(c1[a:b] ** 2)
            e2 = np.sum(c2[a:b] ** 2)
            assert abs(e1 - e2) < 1e-9


def test_sh_parity():
    rng = np.random.default_rng(6)
    odd = [1, 2, 3, 9, 10, 11, 12, 13, 14, 15]
    even = [0, 4, 5, 6, 7, 8]
    for _ in range(20):
        d = rand_unit(rng)
        cp = L.sh_encode(d).coeffs
        cm = L.sh_encode(-d).coeffs
        np.testing.assert_allclose(cm[odd], -cp[odd], atol=1e-9)
        np.testing.assert_allclose(cm[even], cp[even], atol=1e-9)


def test_encode_sequence_single_frame_reduces_to_encode():
    d = np.array([0.0, 1.0, 0.0])
    seq = L.encode_light_sequence(L.LightSpec(d.reshape(1, 3)))
    assert seq.shape == (1, 16)
    np.testing.assert_allclose(seq[0], L.sh_encode(d).coeffs, atol=1e-6)


def test_encode_sequence_constant_direction():
    spec = L.LightSpec.static([0.0, 0.0, 1.0], 25)
    seq = L.encode_light_sequence(spec)
    assert seq.shape == (25, 16)
    for row in seq[1:]:
        np.testing.assert_array_equal(row, seq[0])


def test_encode_sequence_matches_per_frame_oracle():
    rng = np.random.default_rng(7)
    dirs = np.stack([rand_unit(rng) for _ in range(9)])
    seq = L.encode_light_sequence(L.LightSpec(dirs))
    for f in range(9):
        np.testing.assert_allclose(seq[f], L.sh_encode(dirs[f]).coeffs, atol=1e-6)


def test_time_varying_spec_passes_through():
    rng = np.random.default_rng(8)
    dirs = np.stack([rand_unit(rng) for _ in range(25)])
    spec = L.LightSpec(dirs)
    assert spec.frame_count == 25
    np.testing.assert_array_equal(spec.directions, dirs)


def test_hemisphere_constraint_and_count():
    rng = np.random.default_rng(9)
    for _ in range(10):
        v = rand_unit(rng)
        dirs = L.sample_hemisphere_lights(v, rng=rng)
        assert dirs.shape == (16, 3)
        assert (dirs @ v >= -1e-12).all()
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)


def test_hemisphere_mean_direction():
    v = np.array([0.0, 1.0, 0.0])
    dirs = L.sample_hemisphere_lights(v, n=10_000)
    mean = dirs.mean(axis=0)
    np.testing.assert_allclose(mean, v * 0.5, atol=0.05)


def test_hemisphere_rejects_bad_args():
    with pytest.raises(ValueError):
        L.sample_hemisphere_lights([0.0, 0.0, 1.0], n=0)
    with pytest.raises(ValueError):
        L.sample_hemisphere_lights([0.0, 0.0, 3.0])


def test_light_json_roundtrip():
    spec = L.LightSpec.static([0.0, 0.0, 1.0], 4)
    obj = L.light_to_json(spec, mode="per_frame")
    back = L.light_from_json(obj, n_frames=4)
    np.testing.assert_allclose(back.directions, spec.directions)

    static = L.light_to_json([0.0, 1.0, 0.0])
    back2 = L.light_from_json(static, n_frames=3)
    assert back2.frame_count == 3
    np.testing.assert_allclose(back2.directions[2], [0.0, 1.0, 0.0])


def test_light_json_validation():
    with pytest.raises(ValueError):
        L.light_from_json({"mode": "spinning", "directions": [[0, 0, 1]]})
    with pytest.raises(ValueError):
        L.light_from_json({"mode": "per_frame", "directions": []})
    with pytest.raises(ValueError):
        L.light_from_json({"mode": "per_frame", "directions": [[0, 0, 1]]}, n_frames=3)
