"""Sparse pixel trajectories, dense flow scatter/smoothing, and the
multi-scale motion encoder feeding the denoiser's encoder stages.

Flow layout: slot 1 of the F-slot field is all-zero; the displacement
from frame f to f+1 lands in slot f+1 at the (rounded) frame-f position
of the track. Colliding tracks sum their vectors, which keeps the
scatter exactly linear in the displacements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import nn
from . import tensor as T
from .tensor import Tensor

__all__ = [
    "TrajectorySet",
    "FlowField",
    "displacements",
    "scatter_flow",
    "gaussian_smooth",
    "default_sigma",
    "ObjMotionNet",
    "downsample_field",
    "trajectories_to_json",
    "trajectories_from_json",
]

BASE_SIGMA_PX = 4.0
BASE_MIN_EXTENT = 320.0  # sigma is quoted at 320x512 scale


def default_sigma(height, width):
    """Smoothing sigma scaled proportionally to min(H, W)."""
    return BASE_SIGMA_PX * min(height, width) / BASE_MIN_EXTENT


@dataclass
class TrajectorySet:
    """Up to N pixel tracks of equal length F inside a W x H image."""

    points: np.ndarray  # (N,F,2) as (x,y)
    frame_count: int
    width: int
    height: int
    ids: list = field(default_factory=list)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, self.frame_count, 2)
        if pts.ndim != 3 or pts.shape[1] != self.frame_count or pts.shape[2] != 2:
            raise ValueError(f"tracks must be (N,{self.frame_count},2), got {pts.shape}")
        if pts.size:
            x, y = pts[..., 0], pts[..., 1]
            if (x < 0).any() or (x >= self.width).any() or (y < 0).any() or (y >= self.height).any():
                raise ValueError("track points must lie inside the image")
        self.points = pts
        if not self.ids:
            self.ids = list(range(len(pts)))
        elif len(self.ids) != len(pts):
            raise ValueError("ids must match track count")

    def __len__(self):
        return len(self.points)

    def subset(self, indices):
        return TrajectorySet(self.points[list(indices)], self.frame_count,
                             self.width, self.height,
                             ids=[self.ids[i] for i in indices])

    def path_lengths(self):
        """Total path length per track: sum of per-step displacement norms."""
        if len(self) == 0:
            return np.zeros(0)
        steps = np.diff(self.points, axis=1)
        return np.linalg.norm(steps, axis=2).sum(axis=1)


@dataclass
class FlowField:
    values: np.ndarray  # (F,H,W,2) float32, (dx,dy) in pixels

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 4 or v.shape[3] != 2:
            raise ValueError(f"flow must be (F,H,W,2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("flow field must be finite")
        self.values = v

    @property
    def shape(self):
        return self.values.shape


def displacements(track):
    """Per-step displacement vectors s[f+1] - s[f]; requires F >= 2."""
    pts = np.asarray(track, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("track needs at least two frames")
    return np.diff(pts, axis=0)


def _round_px(a):
    # floor(x + 0.5): plain half-up rounding, no banker's ties
    return np.floor(a + 0.5).astype(np.int64)


def scatter_flow(trajs):
    """Place per-step displacements onto an F-frame flow tensor."""
    f, h, w = trajs.frame_count, trajs.height, trajs.width
    out = np.zeros((f, h, w, 2), dtype=np.float32)
    if len(trajs) == 0 or f < 2:
        return FlowField(out)
    pos = trajs.points[:, :-1, :]  # origin of each step
    vel = np.diff(trajs.points, axis=1)
    xi = np.minimum(_round_px(pos[..., 0]), w - 1)
    yi = np.minimum(_round_px(pos[..., 1]), h - 1)
    frame = np.broadcast_to(np.arange(1, f), xi.shape)
    np.add.at(out, (frame.ravel(), yi.ravel(), xi.ravel()),
              vel.reshape(-1, 2).astype(np.float32))
    return FlowField(out)


def gaussian_smooth(flow, sigma_px):
    """Per-frame, per-channel Gaussian blur (truncation 3 sigma, zero padding)."""
    if sigma_px <= 0:
        raise ValueError("sigma must be positive")
    v = flow.values
    out = np.empty_like(v)
    for f in range(v.shape[0]):
        for c in range(2):
            out[f, :, :, c] = ndimage.gaussian_filter(
                v[f, :, :, c], sigma=sigma_px, mode="constant", cval=0.0, truncate=3.0
            )
    return FlowField(out)


def downsample_field(flow, factor):
    """Average-pool the flow spatially by an integer factor (for the latent grid)."""
    f, h, w, c = flow.values.shape
    if h % factor or w % factor:
        raise ValueError("flow extents must be divisible by the pooling factor")
    v = flow.values.reshape(f, h // factor, factor, w // factor, factor, c)
    return FlowField(v.mean(axis=(2, 4)))


class ObjMotionNet(nn.Module):
    """Conv pyramid over per-frame flow maps -> S multi-scale feature maps.

    Every conv is bias-free and each stage's output projection starts at
    zero, so a zero flow field produces exactly zero features at any point
    in training; the encoder injection then starts as a no-op.
    """

    def __init__(self, rng, channels=(48, 64, 96, 128)):
        self.channels = tuple(channels)
        self.stem = nn.Conv2d(rng, 2, channels[0], kernel=3, bias=False)
        downs = []
        projs = [nn.Conv2d(rng, channels[0], channels[0], kernel=3, bias=False, zero_init=True)]
        for cin, cout in zip(channels[:-1], channels[1:]):
            downs.append(nn.Conv2d(rng, cin, cout, kernel=3, stride=2, bias=False))
            projs.append(nn.Conv2d(rng, cout, cout, kernel=3, bias=False, zero_init=True))
        self.downs = nn.ModuleList(downs)
        self.projs = nn.ModuleList(projs)

    def __call__(self, flow):
        """flow: Tensor or array (F,H,W,2) -> list of Tensors (F,C_s,H/2^s,W/2^s)."""
        arr = flow.values if isinstance(flow, FlowField) else flow
        x = arr if isinstance(arr, Tensor) else Tensor(np.asarray(arr, dtype=np.float32))
        f, h, w, _ = x.shape
        div = 2 ** (len(self.channels) - 1)
        if h % div or w % div:
            raise ValueError(f"flow extents must be divisible by {div}")
        x = T.permute(x, (0, 3, 1, 2))
        feats = []
        h = T.silu(self.stem(x))
        feats.append(self.projs[0](h))
        for down, proj in zip(self.downs, self.projs[1:]):
            h = T.silu(down(h))
            feats.append(proj(h))
        return feats


def trajectories_to_json(trajs):
    return {
        "frame_count": trajs.frame_count,
        "width": trajs.width,
        "height": trajs.height,
        "tracks": [
            {"id": int(tid), "points": [[float(x), float(y)] for x, y in pts]}
            for tid, pts in zip(trajs.ids, trajs.points)
        ],
    }


def trajectories_from_json(obj):
    f = int(obj["frame_count"])
    w, h = int(obj["width"]), int(obj["height"])
    tracks = obj.get("tracks", [])
    ids = [int(t["id"]) for t in tracks]
    pts = np.asarray([t["points"] for t in tracks], dtype=np.float64)
    if pts.size == 0:
        pts = pts.reshape(0, f, 2)
    return TrajectorySet(pts, f, w, h, ids=ids)


def save_trajectories(path, trajs):
    with open(path, "w") as fh:
        json.dump(trajectories_to_json(trajs), fh, sort_keys=True)


def load_trajectories(path):
    with open(path) as fh:
        return trajectories_from_json(json.load(fh))
