"""Deterministic DDIM sampling (eta=0) with classifier-free guidance."""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor, no_grad
from .conditioning import null_bundle, substitute_nulls

__all__ = ["ddim_sample", "ddim_timesteps"]


def ddim_timesteps(total, steps):
    """Strided timestep subset, descending, always ending at 0."""
    if steps <= 0:
        raise ValueError("steps must be positive")
    if steps > total:
        raise ValueError(f"steps {steps} exceeds schedule length {total}")
    taus = np.unique(np.linspace(0, total - 1, steps).round().astype(np.int64))
    return taus[::-1].copy()


def ddim_sample(eps_fn, bundle, schedule, shape, steps=25, guidance=7.5, seed=0,
                uncond_bundle=None, x_init=None, progress=None, clip_x0=None):
    """Run the deterministic DDIM trajectory from seeded Gaussian noise.

    eps_fn(z_t, t, bundle) -> eps array. guidance s blends
    eps_u + s*(eps_c - eps_u); s=1 skips the unconditional pass entirely
    and s=0 skips the conditional pass, so both edge cases are exact.
    clip_x0, when given, projects each step's clean estimate back onto the
    data manifold (the eps used for the update is re-derived so the
    trajectory stays consistent); leave None for exact DDIM algebra.
    """
    taus = ddim_timesteps(schedule.timesteps, steps)
    if x_init is not None:
        z = np.asarray(x_init).copy()
    else:
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(shape).astype(np.float32)
    abar = schedule.alphas_cumprod

    def _eps(b):
        return b.data if isinstance(b, Tensor) else np.asarray(b)

    with no_grad():
        for i, t in enumerate(taus):
            if guidance == 1.0:
                eps = _eps(eps_fn(z, int(t), bundle))
            elif guidance == 0.0:
                eps = _eps(eps_fn(z, int(t), uncond_bundle))
            else:
                if uncond_bundle is None:
                    raise ValueError("guidance != 1 requires an unconditional bundle")
                eps_c = _eps(eps_fn(z, int(t), bundle))
                eps_u = _eps(eps_fn(z, int(t), uncond_bundle))
                eps = eps_u + guidance * (eps_c - eps_u)
            a_t = abar[t]
            sq_a = float(np.sqrt(a_t))
            sq_b = float(np.sqrt(1.0 - a_t))
            x0 = (z - sq_b * eps) / sq_a
            if clip_x0 is not None:
                x0 = clip_x0(x0)
                eps = (z - sq_a * x0) / sq_b
            if i + 1 < len(taus):
                a_n = abar[taus[i + 1]]
                z = float(np.sqrt(a_n)) * x0 + float(np.sqrt(1.0 - a_n)) * eps
            else:
                z = x0
            if progress is not None:
                progress((i + 1) / len(taus))
    return z


def sample_video(model, bundle, steps=25, guidance=7.5, seed=0, progress=None):
    """End-to-end sampling for a user bundle: substitute nulls, run DDIM with
    pixel-range x0 projection, decode to frames in [0,1]."""
    cfg = model.config
    shapes = model.null_shapes()
    cond = substitute_nulls(bundle, cfg.frames, shapes)
    uncond = null_bundle(cond, cfg.frames, shapes)
    shape = (cfg.frames, cfg.latent_channels, *cfg.latent_hw)

    def clip_pixels(x0):
        px = np.clip(model.decode_video(x0.astype(np.float32)), 0.0, 1.0)
        return model.encode_video(px)

    z = ddim_sample(model.predict_eps, cond, model.schedule, shape,
                    steps=steps, guidance=guidance, seed=seed,
                    uncond_bundle=uncond, progress=progress, clip_x0=clip_pixels)
    return np.clip(model.decode_video(z), 0.0, 1.0)
