"""SE(3) poses, pinhole projection, point-cloud z-buffer rendering, and
camera trajectory sampling.

Convention: extrinsics are world-to-camera everywhere (p_cam = R p + t),
the camera looks along +z in its own frame. Depth ties during splatting
are broken by lowest point index, so renders are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

__all__ = [
    "Pose",
    "CameraIntrinsics",
    "PointCloud",
    "RenderedFrame",
    "pose_inverse",
    "compose",
    "look_at",
    "project",
    "unproject_image",
    "render_point_cloud",
    "render_sequence",
    "interpolate_trajectory",
    "catmull_rom",
    "sample_vld_camera",
    "ply_read",
    "ply_write",
    "trajectory_to_json",
    "trajectory_from_json",
]

BEHIND_CAMERA = None  # marker returned by `project` for points with z <= eps

_Z_EPS = 1e-6


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray  # (3,3) orthonormal, det +1
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant must be +1")

    @staticmethod
    def identity():
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def camera_center(self):
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")


@dataclass
class PointCloud:
    points: np.ndarray  # (N,3)
    colors: np.ndarray  # (N,3) in [0,1]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(self.points) != len(self.colors):
            raise ValueError("points and colors must have equal length")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return len(self.points)


@dataclass
class RenderedFrame:
    image: np.ndarray  # (H,W,3) in [0,1]
    depth: np.ndarray  # (H,W), +inf where empty
    coverage: np.ndarray = field(default=None)  # (H,W) bool

    def __post_init__(self):
        if self.coverage is None:
            self.coverage = np.isfinite(self.depth)


def pose_inverse(pose):
    rt = pose.rotation.T
    return Pose(rt, -rt @ pose.translation)


def compose(a, b):
    """Transform that applies `b` first, then `a`."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera pose for a camera at `eye` looking at `target` (+z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    rn = np.linalg.norm(right)
    if rn < 1e-9:  # forward parallel to up: pick any stable right
        alt = np.array([1.0, 0.0, 0.0]) if abs(fwd[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, alt)
        rn = np.linalg.norm(right)
    right /= rn
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])  # rows are camera axes in world coords
    return Pose(r, -r @ eye)


def project(p_world, pose, intr):
    """Pinhole projection; returns (u, v, depth) or BEHIND_CAMERA."""
    p = pose.rotation @ np.asarray(p_world, dtype=np.float64) + pose.translation
    if p[2] <= _Z_EPS:
        return BEHIND_CAMERA
    u = intr.cx + intr.fx * p[0] / p[2]
    v = intr.cy + intr.fy * p[1] / p[2]
    return (u, v, p[2])


def unproject_image(image, depth, pose, intr):
    """Lift every pixel to a colored world point using per-pixel depth."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    d = np.broadcast_to(np.asarray(depth, dtype=np.float64), (h, w))
    vs, us = np.mgrid[0:h, 0:w]
    x = (us - intr.cx) / intr.fx * d
    y = (vs - intr.cy) / intr.fy * d
    cam = np.stack([x, y, d], axis=-1).reshape(-1, 3)
    world = (cam - pose.translation) @ pose.rotation
    return PointCloud(world, img.reshape(-1, 3))


def _disc_offsets(radius):
    if radius <= 0:
        return np.array([[0, 0]])
    r = int(radius)
    dv, du = np.mgrid[-r : r + 1, -r : r + 1]
    keep = du**2 + dv**2 <= radius**2
    return np.stack([du[keep], dv[keep]], axis=1)


def render_point_cloud(cloud, pose, intr, splat_radius_px=1):
    """Z-buffer splat render: nearest point wins each pixel, ties to lowest index."""
    if len(cloud) == 0:
        raise ValueError("cannot render an empty point cloud")
    h, w = intr.height, intr.width
    cam = cloud.points @ pose.rotation.T + pose.translation
    z = cam[:, 2]
    valid = z > _Z_EPS
    image = np.zeros((h, w, 3))
    depth = np.full((h, w), np.inf)
    if not valid.any():
        return RenderedFrame(image, depth)

    idx = np.nonzero(valid)[0]
    zc = z[idx]
    u = np.floor(intr.cx + intr.fx * cam[idx, 0] / zc + 0.5).astype(np.int64)
    v = np.floor(intr.cy + intr.fy * cam[idx, 1] / zc + 0.5).astype(np.int64)

    # Paint far-to-near so the final write per pixel is the closest point;
    # among equal depths the lowest original index is painted last.
    order = np.lexsort((-idx, -zc))
    u, v, zc, cols = u[order], v[order], zc[order], cloud.colors[idx[order]]

    for du, dv in _disc_offsets(splat_radius_px):
        uu, vv = u + du, v + dv
        inside = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        if not inside.any():
            continue
        ui, vi, zi, ci = uu[inside], vv[inside], zc[inside], cols[inside]
        nearer = zi <= depth[vi, ui]
        ui, vi, zi, ci = ui[nearer], vi[nearer], zi[nearer], ci[nearer]
        # duplicate pixel targets: numpy fancy assignment keeps the last
        # occurrence, which is the nearest point given the paint order
        depth[vi, ui] = zi
        image[vi, ui] = ci
    return RenderedFrame(image, depth)


def render_sequence(cloud, trajectory, intr, ref_image, splat_radius_px=1):
    """Render along a trajectory; frame 1 is replaced by the reference image."""
    if len(trajectory) == 0:
        raise ValueError("trajectory must contain at least one pose")
    ref = np.asarray(ref_image, dtype=np.float64)
    if ref.shape[:2] != (intr.height, intr.width):
        raise ValueError("reference image extents do not match intrinsics")
    frames = [
        RenderedFrame(ref.copy(), np.zeros((intr.height, intr.width)),
                      np.ones((intr.height, intr.width), dtype=bool))
    ]
    for pose in trajectory[1:]:
        frames.append(render_point_cloud(cloud, pose, intr, splat_radius_px))
    return frames


# -- trajectories -------------------------------------------------------------


def interpolate_trajectory(keyposes, n_frames):
    """Resample poses: SLERP on rotations, linear on translations."""
    if len(keyposes) < 1:
        raise ValueError("need at least one keypose")
    if len(keyposes) == 1 or n_frames == 1:
        return [keyposes[0]] * n_frames
    times = np.linspace(0.0, 1.0, len(keyposes))
    samples = np.linspace(0.0, 1.0, n_frames)
    rots = Rotation.from_matrix(np.stack([p.rotation for p in keyposes]))
    slerp = Slerp(times, rots)
    rmats = slerp(samples).as_matrix()
    trans = np.stack([p.translation for p in keyposes])
    out = []
    for i, s in enumerate(samples):
        j = min(int(np.searchsorted(times, s, side="right")) - 1, len(keyposes) - 2)
        j = max(j, 0)
        a = (s - times[j]) / (times[j + 1] - times[j])
        t = (1 - a) * trans[j] + a * trans[j + 1]
        out.append(Pose(rmats[i], t))
    return out


def catmull_rom(control, n_samples):
    """Centripetal-free (uniform) Catmull–Rom through the control points."""
    pts = np.asarray(control, dtype=np.float64)
    if len(pts) < 2:
        raise ValueError("need at least two control points")
    ext = np.vstack([2 * pts[0] - pts[1], pts, 2 * pts[-1] - pts[-2]])
    out = np.empty((n_samples, pts.shape[1]))
    ts = np.linspace(0.0, len(pts) - 1.0, n_samples)
    for i, t in enumerate(ts):
        seg = min(int(t), len(pts) - 2)
        u = t - seg
        p0, p1, p2, p3 = ext[seg : seg + 4]
        out[i] = 0.5 * (
            (2 * p1)
            + (-p0 + p2) * u
            + (2 * p0 - 5 * p1 + 4 * p2 - p3) * u**2
            + (-p0 + 3 * p1 - 3 * p2 + p3) * u**3
        )
    return out


def sample_vld_camera(rng, model_center, n_frames=25, radius_range=(0.7, 1.3),
                      max_step=0.15, cone_deg=25.0):
    """Smooth look-at trajectory on a spherical shell around `model_center`.

    Four control points are drawn on the shell (each within `cone_deg` of the
    previous) and joined with a Catmull–Rom spline; every pose faces the
    center exactly.
    """
    if n_frames < 2:
        raise ValueError("need at least two frames")
    center = np.asarray(model_center, dtype=np.float64)
    lo, hi = radius_range
    margin = 0.05 * (hi - lo)

    def rand_unit():
        v = rng.standard_normal(3)
        return v / np.linalg.norm(v)

    dirs = [rand_unit()]
    cos_cone = np.cos(np.deg2rad(cone_deg))
    for _ in range(3):
        d = dirs[-1]
        while True:
            cand = rand_unit()
            if np.dot(cand, d) >= cos_cone:
                dirs.append(cand)
                break
    radii = rng.uniform(lo + margin, hi - margin, size=4)
    control = center + np.stack(dirs) * radii[:, None]
    positions = catmull_rom(control, n_frames)

    # clamp radial overshoot back into the shell
    rel = positions - center
    r = np.linalg.norm(rel, axis=1)
    r_clamped = np.clip(r, lo, hi)
    positions = center + rel * (r_clamped / r)[:, None]

    # enforce the configured step bound by pulling outliers toward the spline mean
    deltas = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    if deltas.max() > max_step:
        scale = max_step / deltas.max()
        mid = positions.mean(axis=0)
        positions = mid + (positions - mid) * scale
        rel = positions - center
        r = np.clip(np.linalg.norm(rel, axis=1), lo, hi)
        positions = center + rel / np.linalg.norm(rel, axis=1)[:, None] * r[:, None]

    return [look_at(p, center) for p in positions]


# -- serialization -------------------------------------------------------------


def ply_write(path, cloud):
    """ASCII PLY subset: element vertex with x,y,z,red,green,blue."""
    cols = np.clip(np.rint(cloud.colors * 255), 0, 255).astype(np.uint8)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for p, c in zip(cloud.points, cols):
        lines.append(f"{p[0]:.7g} {p[1]:.7g} {p[2]:.7g} {c[0]} {c[1]} {c[2]}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def ply_read(path):
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        n = None
        props = []
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError("only ASCII PLY is supported")
            if tok[0] == "element":
                if tok[1] == "vertex":
                    n = int(tok[2])
                elif int(tok[2]) > 0:
                    raise ValueError(f"unsupported element {tok[1]}")
            elif tok[0] == "property" and n is not None:
                props.append(tok[2])
            elif tok[0] == "end_header":
                break
        if n is None:
            raise ValueError("missing vertex element")
        want = ["x", "y", "z", "red", "green", "blue"]
        if props[: len(want)] != want:
            raise ValueError(f"expected vertex properties {want}, got {props}")
        data = np.loadtxt(f, max_rows=n, ndmin=2)
    pts = data[:, :3]
    cols = data[:, 3:6] / 255.0
    return PointCloud(pts, cols)


def intrinsics_to_json(intr):
    return {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
            "width": intr.width, "height": intr.height}


def intrinsics_from_json(obj):
    return CameraIntrinsics(fx=float(obj["fx"]), fy=float(obj["fy"]), cx=float(obj["cx"]),
                            cy=float(obj["cy"]), width=int(obj["width"]), height=int(obj["height"]))


def trajectory_to_json(trajectory, intr):
    return {
        "intrinsics": intrinsics_to_json(intr),
        "frames": [
            {"R": [float(x) for x in p.rotation.reshape(-1)],
             "t": [float(x) for x in p.translation]}
            for p in trajectory
        ],
    }


def trajectory_from_json(obj):
    intr = intrinsics_from_json(obj["intrinsics"])
    frames = []
    for fr in obj["frames"]:
        r = np.asarray(fr["R"], dtype=np.float64).reshape(3, 3)
        t = np.asarray(fr["t"], dtype=np.float64)
        frames.append(Pose(r, t))
    if not frames:
        raise ValueError("trajectory has no frames")
    return frames, intr


def save_trajectory(path, trajectory, intr):
    with open(path, "w") as f:
        json.dump(trajectory_to_json(trajectory, intr), f, indent=1, sort_keys=True)


def load_trajectory(path):
    with open(path) as f:
        return trajectory_from_json(json.load(f))
