"""Per-frame lighting directions and their spherical-harmonic encoding.

Directions live in camera coordinates. A reference direction is carried
to other frames by treating it as a homogeneous point (w=1), moving it to
world space with the inverse reference extrinsic, mapping it into each
frame's camera and renormalizing; a rotation-only alternative is exposed
behind a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import pose_inverse

__all__ = [
    "LightSpec",
    "SHVector",
    "SH_DIM",
    "propagate_light",
    "propagate_per_frame",
    "resolve_light",
    "sh_encode",
    "sh_basis",
    "encode_light_sequence",
    "sample_hemisphere_lights",
    "light_to_json",
    "light_from_json",
]

SH_DIM = 16  # real SH bands l=0..3


@dataclass
class LightSpec:
    """Unit lighting directions, one per frame, in camera coordinates."""

    directions: np.ndarray  # (F,3)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        norms = np.linalg.norm(d, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise ValueError("lighting directions must be unit vectors")
        self.directions = d

    @property
    def frame_count(self):
        return len(self.directions)

    @staticmethod
    def static(direction, n_frames):
        d = np.asarray(direction, dtype=np.float64)
        return LightSpec(np.tile(d / np.linalg.norm(d), (n_frames, 1)))


@dataclass(frozen=True)
class SHVector:
    coeffs: np.ndarray  # (16,)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        if c.shape != (SH_DIM,):
            raise ValueError(f"SH vector must have exactly {SH_DIM} coefficients")
        object.__setattr__(self, "coeffs", c)


def propagate_light(l_ref, e_ref, trajectory, rotation_only=False):
    """Carry the reference-frame light direction into every frame's camera.

    Homogeneous-point chain by default; `rotation_only=True` instead maps
    the direction with pure rotations (no translation influence).
    """
    l = np.asarray(l_ref, dtype=np.float64)
    if abs(np.linalg.norm(l) - 1.0) > 1e-3:
        raise ValueError("reference light direction must be a unit vector")
    dirs = []
    if rotation_only:
        l_world = e_ref.rotation.T @ l
        for pose in trajectory:
            v = pose.rotation @ l_world
            dirs.append(v / np.linalg.norm(v))
        return LightSpec(np.stack(dirs))

    p_world = pose_inverse(e_ref).matrix() @ np.array([l[0], l[1], l[2], 1.0])
    for pose in trajectory:
        p_f = pose.matrix() @ p_world
        v = p_f[:3]
        n = np.linalg.norm(v)
        if n < 1e-9:
            raise ValueError("light at camera origin: direction is undefined")
        dirs.append(v / n)
    return LightSpec(np.stack(dirs))


def propagate_per_frame(dirs_ref, e_ref, trajectory, rotation_only=False):
    """Per-frame variant: dirs_ref[f] (given in the reference camera frame)
    is carried into frame f's camera."""
    dirs_ref = np.asarray(dirs_ref, dtype=np.float64)
    if len(dirs_ref) != len(trajectory):
        raise ValueError("need one reference-frame direction per trajectory pose")
    out = []
    for d, pose in zip(dirs_ref, trajectory):
        spec = propagate_light(d, e_ref, [pose], rotation_only=rotation_only)
        out.append(spec.directions[0])
    return LightSpec(np.stack(out))


def resolve_light(obj, e_ref, trajectory):
    """Parse a light-schema JSON object and carry it along the trajectory."""
    spec_ref = light_from_json(obj, n_frames=len(trajectory))
    if obj.get("mode") == "static":
        return propagate_light(spec_ref.directions[0], e_ref, trajectory)
    return propagate_per_frame(spec_ref.directions, e_ref, trajectory)


# Orthonormal real SH basis without the Condon-Shortley phase,
# ordered (0,0),(1,-1),(1,0),(1,1),(2,-2)...(3,3).
_C00 = 0.5 * math.sqrt(1.0 / math.pi)
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2_2 = 0.5 * math.sqrt(15.0 / math.pi)
_C20 = 0.25 * math.sqrt(5.0 / math.pi)
_C22 = 0.25 * math.sqrt(15.0 / math.pi)
_C3_3 = 0.25 * math.sqrt(35.0 / (2.0 * math.pi))
_C3_2 = 0.5 * math.sqrt(105.0 / math.pi)
_C3_1 = 0.25 * math.sqrt(21.0 / (2.0 * math.pi))
_C30 = 0.25 * math.sqrt(7.0 / math.pi)
_C32 = 0.25 * math.sqrt(105.0 / math.pi)


def sh_basis(direction):
    """Evaluate the 16 real SH basis functions at a unit direction."""
    x, y, z = np.asarray(direction, dtype=np.float64)
    return np.array([
        _C00,
        _C1 * y,
        _C1 * z,
        _C1 * x,
        _C2_2 * x * y,
        _C2_2 * y * z,
        _C20 * (3.0 * z * z - 1.0),
        _C2_2 * x * z,
        _C22 * (x * x - y * y),
        _C3_3 * y * (3.0 * x * x - y * y),
        _C3_2 * x * y * z,
        _C3_1 * y * (5.0 * z * z - 1.0),
        _C30 * z * (5.0 * z * z - 3.0),
        _C3_1 * x * (5.0 * z * z - 1.0),
        _C32 * z * (x * x - y * y),
        _C3_3 * x * (x * x - 3.0 * y * y),
    ])


def sh_encode(direction):
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-3:
        raise ValueError("sh_encode expects a unit direction")
    return SHVector(sh_basis(d))


def encode_light_sequence(spec):
    """Per-frame SH encoding: (F,16) float32."""
    rows = [sh_basis(d) for d in spec.directions]
    return np.stack(rows).astype(np.float32)


def sample_hemisphere_lights(view_dir, n=16, rng=None, jitter=0.0):
    """Area-uniform directions on the hemisphere whose base normal is `view_dir`.

    Fibonacci lattice, optionally jittered with the provided rng; every
    output satisfies dot(d, view_dir) >= 0.
    """
    if n <= 0:
        raise ValueError("need at least one direction")
    v = np.asarray(view_dir, dtype=np.float64)
    nv = np.linalg.norm(v)
    if abs(nv - 1.0) > 1e-3:
        raise ValueError("view_dir must be a unit vector")
    v = v / nv

    golden = (1.0 + math.sqrt(5.0)) / 2.0
    i = np.arange(n)
    if jitter > 0.0 and rng is not None:
        offs = rng.uniform(-jitter, jitter, size=(n, 2))
    else:
        offs = np.zeros((n, 2))
    z = np.clip((i + 0.5 + offs[:, 0]) / n, 0.0, 1.0)  # cos(theta) in [0,1]
    phi = 2.0 * math.pi * ((i / golden + offs[:, 1]) % 1.0)
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    local = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)

    # rotate local +z onto view_dir
    a = np.array([0.0, 0.0, 1.0])
    if np.allclose(v, a):
        r = np.eye(3)
    elif np.allclose(v, -a):
        r = np.diag([1.0, -1.0, -1.0])
    else:
        axis = np.cross(a, v)
        sn = np.linalg.norm(axis)
        cs = float(np.dot(a, v))
        axis /= sn
        kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        r = np.eye(3) + sn * kx + (1 - cs) * (kx @ kx)
    out = local @ r.T
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def light_to_json(spec_or_dir, mode="static"):
    if mode == "static":
        d = np.asarray(spec_or_dir, dtype=np.float64).reshape(3)
        return {"mode": "static", "directions": [[float(x) for x in d]]}
    spec = spec_or_dir
    return {"mode": "per_frame",
            "directions": [[float(x) for x in d] for d in spec.directions]}


def light_from_json(obj, n_frames=None):
    """Parse the light schema into a LightSpec (static mode expands to F)."""
    mode = obj.get("mode")
    dirs = np.asarray(obj.get("directions", []), dtype=np.float64)
    if mode not in ("static", "per_frame"):
        raise ValueError(f"unknown light mode {mode!r}")
    if dirs.ndim != 2 or dirs.shape[1] != 3 or len(dirs) == 0:
        raise ValueError("directions must be a non-empty list of 3-vectors")
    if mode == "static":
        if len(dirs) != 1:
            raise ValueError("static mode takes exactly one direction")
        if n_frames is None:
            raise ValueError("static mode needs a frame count to expand")
        return LightSpec.static(dirs[0], n_frames)
    if n_frames is not None and len(dirs) != n_frames:
        raise ValueError(f"per_frame mode expects {n_frames} directions, got {len(dirs)}")
    return LightSpec(dirs)
