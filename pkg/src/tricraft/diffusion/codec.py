"""Exactly invertible latent codec: 4x4 space-to-depth with an orthonormal
per-patch DCT transform. Stands in for a learned VAE while preserving the
latent-diffusion layout (F, C*p*p, H/p, W/p).
"""

from __future__ import annotations

import numpy as np

__all__ = ["latent_encode", "latent_decode", "latent_shape", "PATCH"]

PATCH = 4


def _dct_matrix(n):
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    m = np.cos(np.pi * (x + 0.5) * k / n)
    m[0] *= np.sqrt(1.0 / n)
    m[1:] *= np.sqrt(2.0 / n)
    return m


_D = _dct_matrix(PATCH)
_M = np.kron(_D, _D).astype(np.float64)  # orthonormal over vectorized 4x4 patches


def latent_shape(frames, height, width, channels=3, patch=PATCH):
    if height % patch or width % patch:
        raise ValueError(f"extents must be divisible by {patch}")
    return (frames, channels * patch * patch, height // patch, width // patch)


def latent_encode(video):
    """(F,C,H,W) -> (F,C*p*p,H/p,W/p); orthonormal, so decode inverts exactly."""
    v = np.asarray(video)
    f, c, h, w = v.shape
    p = PATCH
    if h % p or w % p:
        raise ValueError(f"extents must be divisible by {p}")
    dtype = v.dtype if v.dtype in (np.float32, np.float64) else np.float32
    patches = v.reshape(f, c, h // p, p, w // p, p).transpose(0, 1, 2, 4, 3, 5)
    patches = patches.reshape(f, c, h // p, w // p, p * p)
    coeff = patches @ _M.T.astype(dtype)
    z = coeff.transpose(0, 1, 4, 2, 3).reshape(f, c * p * p, h // p, w // p)
    return np.ascontiguousarray(z.astype(dtype, copy=False))


def latent_decode(z):
    zz = np.asarray(z)
    f, ck, hh, ww = zz.shape
    p = PATCH
    c = ck // (p * p)
    if c * p * p != ck:
        raise ValueError(f"latent channel count {ck} is not c*{p*p}")
    dtype = zz.dtype if zz.dtype in (np.float32, np.float64) else np.float32
    coeff = zz.reshape(f, c, p * p, hh, ww).transpose(0, 1, 3, 4, 2)
    patches = coeff @ _M.astype(dtype)
    patches = patches.reshape(f, c, hh, ww, p, p).transpose(0, 1, 2, 4, 3, 5)
    x = patches.reshape(f, c, hh * p, ww * p)
    return np.ascontiguousarray(x.astype(dtype, copy=False))
