"""Motion-control and fidelity metrics: ObjMC, CamMC, PSNR, SSIM.

CamMC here is a normalized-[R|t] Frobenius variant: both pose sequences
are re-expressed relative to their first frame and scaled to unit mean
translation norm before comparison. The paper's CamMC depends on an
external pose estimator, so absolute values are not comparable; every
report carries a note to that effect.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import compose, pose_inverse

__all__ = ["MetricReport", "obj_mc", "cam_mc", "psnr", "ssim", "write_report"]

CAM_MC_NOTE = ("CamMC variant: first-frame-aligned, unit-translation-scale "
               "Frobenius distance over [R|t]; not comparable to estimates "
               "from learned pose estimators")


@dataclass
class MetricReport:
    name: str
    values: list = field(default_factory=list)
    note: str = ""

    def add(self, value):
        self.values.append(float(value))

    @property
    def count(self):
        return len(self.values)

    @property
    def mean(self):
        return float(np.mean(self.values)) if self.values else float("nan")

    @property
    def std(self):
        return float(np.std(self.values)) if self.values else float("nan")

    def to_json(self):
        out = {"metric": self.name, "count": self.count, "mean": self.mean,
               "std": self.std, "values": self.values}
        if self.note:
            out["note"] = self.note
        return out


def obj_mc(pred, gt):
    """Mean Euclidean distance between matched tracks, in pixels."""
    if pred.frame_count != gt.frame_count:
        raise ValueError("frame counts differ")
    gt_by_id = {tid: i for i, tid in enumerate(gt.ids)}
    if sorted(pred.ids) != sorted(gt.ids):
        raise ValueError(f"track ids differ: {sorted(pred.ids)} vs {sorted(gt.ids)}")
    dists = []
    for i, tid in enumerate(pred.ids):
        j = gt_by_id[tid]
        d = np.linalg.norm(pred.points[i] - gt.points[j], axis=1)
        dists.append(d)
    return float(np.mean(dists))


def _normalize_sequence(poses):
    """Express poses relative to the first frame and scale translations to
    unit mean norm."""
    inv0 = pose_inverse(poses[0])
    rel = [compose(p, inv0) for p in poses]
    mats = np.stack([np.concatenate([p.rotation, p.translation[:, None]], axis=1)
                     for p in rel])
    tnorm = np.linalg.norm(mats[:, :, 3], axis=1).mean()
    if tnorm > 1e-9:
        mats[:, :, 3] /= tnorm
    return mats


def cam_mc(pred, gt):
    """Mean per-frame Frobenius distance between normalized [R|t] matrices."""
    if len(pred) != len(gt):
        raise ValueError("pose sequence lengths differ")
    if len(pred) == 0:
        raise ValueError("empty pose sequences")
    a = _normalize_sequence(pred)
    b = _normalize_sequence(gt)
    return float(np.linalg.norm((a - b).reshape(len(a), -1), axis=1).mean())


def psnr(a, b):
    """10 log10(1/MSE) for [0,1] images; capped at 100 dB below MSE 1e-10."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"extent mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse < 1e-10:
        return 100.0
    return float(10.0 * math.log10(1.0 / mse))


_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11x11 window
_K1, _K2 = 0.01, 0.03


def _ssim_window():
    xs = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1)
    k = np.exp(-0.5 * (xs / _SSIM_SIGMA) ** 2)
    k /= k.sum()
    return np.outer(k, k)


def _ssim_single(x, y):
    win = _ssim_window()
    conv = lambda im: ndimage.convolve(im, win, mode="constant")
    pad = _SSIM_RADIUS
    sel = (slice(pad, x.shape[0] - pad), slice(pad, x.shape[1] - pad))
    if x.shape[0] <= 2 * pad or x.shape[1] <= 2 * pad:
        raise ValueError("image smaller than the 11x11 SSIM window")
    mu_x = conv(x)[sel]
    mu_y = conv(y)[sel]
    xx = conv(x * x)[sel] - mu_x * mu_x
    yy = conv(y * y)[sel] - mu_y * mu_y
    xy = conv(x * y)[sel] - mu_x * mu_y
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def ssim(a, b):
    """Gaussian-window (11x11, sigma=1.5) SSIM on [0,1] images.

    Accepts (H,W), (H,W,C), or (F,H,W,C); channels and frames averaged.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"extent mismatch: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        return _ssim_single(x, y)
    if x.ndim == 3:
        return float(np.mean([_ssim_single(x[..., c], y[..., c])
                              for c in range(x.shape[2])]))
    if x.ndim == 4:
        return float(np.mean([ssim(x[f], y[f]) for f in range(x.shape[0])]))
    raise ValueError(f"unsupported rank {x.ndim}")


def write_report(path, reports):
    """Emit reports as JSON (and a CSV next to it)."""
    payload = {"reports": [r.to_json() for r in reports]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
    csv_path = str(path)
    csv_path = csv_path[: csv_path.rfind(".")] + ".csv" if "." in csv_path else csv_path + ".csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "count", "mean", "std"])
        for r in reports:
            w.writerow([r.name, r.count, f"{r.mean:.6g}", f"{r.std:.6g}"])
    return payload
