"""PNG/ZIP helpers and the HSV flow-wheel visualization."""

from __future__ import annotations

import io
import zipfile

import numpy as np
from PIL import Image

__all__ = ["to_png_bytes", "from_png_bytes", "save_png", "load_png",
           "flow_to_rgb", "frames_to_zip"]

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)  # fixed so archives are byte-stable


def to_png_bytes(image):
    """Encode an (H,W,3) [0,1] float image as PNG bytes."""
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[0] == 3 and arr.shape[2] != 3:
        arr = arr.transpose(1, 2, 0)
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def from_png_bytes(data):
    img = Image.open(io.BytesIO(data)).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def save_png(path, image):
    with open(path, "wb") as f:
        f.write(to_png_bytes(image))


def load_png(path):
    with open(path, "rb") as f:
        return from_png_bytes(f.read())


def flow_to_rgb(flow_hw2, max_magnitude=None):
    """Standard HSV color wheel: hue = direction, value = magnitude."""
    flow = np.asarray(flow_hw2, dtype=np.float64)
    dx, dy = flow[..., 0], flow[..., 1]
    mag = np.hypot(dx, dy)
    if max_magnitude is None:
        max_magnitude = mag.max()
    scale = 1.0 / max_magnitude if max_magnitude > 1e-9 else 0.0
    h = (np.arctan2(dy, dx) / (2 * np.pi)) % 1.0
    v = np.clip(mag * scale, 0.0, 1.0)
    s = np.ones_like(v)
    return _hsv_to_rgb(h, s, v)


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    out = np.zeros(h.shape + (3,))
    for idx, (r, g, b) in enumerate([(v, t, p), (q, v, p), (p, v, t),
                                     (p, q, v), (t, p, v), (v, p, q)]):
        mask = i == idx
        out[mask, 0] = r[mask]
        out[mask, 1] = g[mask]
        out[mask, 2] = b[mask]
    return out


def frames_to_zip(frames):
    """Deterministic ZIP of numbered PNG frames (frame_000.png, ...)."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for i, frame in enumerate(frames):
            info = zipfile.ZipInfo(f"frame_{i:03d}.png", date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, to_png_bytes(frame))
    return buf.getvalue()
