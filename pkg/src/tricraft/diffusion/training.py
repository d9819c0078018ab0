"""Three-stage training scheduler: freeze masks, the denoising objective,
and checkpoint IO.

Stage 1 trains the full UNet (camera alignment); stages 2 and 3 freeze the
UNet's temporal layers and train the spatial layers plus the newly active
motion encoder and lighting pathway, first on dense then on sparse
trajectories. The frozen embedding tables stand in for a pretrained
encoder and are never trained.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from .. import tensor as T
from ..tensor import save_tnsr, load_tnsr
from .conditioning import cfg_dropout
from .model import ControlDiffusionModel, ModelConfig
from .schedule import q_sample

__all__ = ["StageConfig", "make_stage", "apply_freeze", "train_step", "train",
           "save_checkpoint", "load_checkpoint", "TrainSample"]

_STAGE_DEFAULTS = {
    1: dict(trainable=("unet.*",),
            frozen=("motion.*", "light_mlp.*", "embed.*"),
            mode="dense", iterations=40_000),
    2: dict(trainable=("unet.spatial.*", "motion.*", "light_mlp.*"),
            frozen=("unet.temporal.*", "embed.*"),
            mode="dense", iterations=20_000),
    3: dict(trainable=("unet.spatial.*", "motion.*", "light_mlp.*"),
            frozen=("unet.temporal.*", "embed.*"),
            mode="sparse", iterations=20_000),
}


@dataclass
class StageConfig:
    stage: int
    trainable_paths: tuple
    frozen_paths: tuple
    trajectory_mode: str
    iterations: int

    def validate_partition(self, model):
        """Every parameter must match exactly one of the two glob lists."""
        for name, _ in model.named_parameters():
            t = nn.match_globs(name, self.trainable_paths)
            f = nn.match_globs(name, self.frozen_paths)
            if t and f:
                raise ValueError(f"parameter {name} matched by both glob lists")
            if not (t or f):
                raise ValueError(f"parameter {name} matched by neither glob list")


def make_stage(stage, iterations=None, scale=1.0):
    if stage not in _STAGE_DEFAULTS:
        raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
    d = _STAGE_DEFAULTS[stage]
    iters = iterations if iterations is not None else max(1, int(round(d["iterations"] * scale)))
    return StageConfig(stage=stage, trainable_paths=tuple(d["trainable"]),
                       frozen_paths=tuple(d["frozen"]),
                       trajectory_mode=d["mode"], iterations=iters)


def apply_freeze(model, stage_cfg):
    stage_cfg.validate_partition(model)
    for name, p in model.named_parameters():
        p.set_trainable(nn.match_globs(name, stage_cfg.trainable_paths))


@dataclass
class TrainSample:
    """One corpus scene decoded into model-ready arrays."""

    video: np.ndarray  # (F,3,H,W) in [0,1]
    renders: np.ndarray  # (F,H,W,3) camera-conditioning renders
    flow: object  # motion.FlowField at video resolution
    light: object  # lighting.LightSpec
    text_ids: np.ndarray
    scene_id: str = ""
    tracks: object = None
    meta: dict = field(default_factory=dict)

    def ref_image(self):
        return self.video[0].transpose(1, 2, 0)


def sample_timestep(rng, timesteps, bias="late"):
    """Draw a diffusion timestep. "late" puts half the mass above 0.75 T,
    where conditioning actually constrains the prediction; "uniform" is the
    plain objective."""
    if bias == "uniform":
        return int(rng.integers(0, timesteps))
    if bias == "late":
        u = rng.random()
        return min(int((1.0 - u * u) * timesteps), timesteps - 1)
    raise ValueError(f"unknown timestep bias {bias!r}")


def train_step(model, samples, rng, optimizer, p_uncond=0.05, t_bias="late"):
    """One optimization step over a batch; returns the mean loss."""
    model.zero_grad()
    total = 0.0
    inv_b = 1.0 / len(samples)
    for s in samples:
        z0 = model.encode_video(s.video)
        bundle = model.build_bundle(s.ref_image(), s.text_ids,
                                    renders=s.renders, flow=s.flow, light=s.light)
        bundle = cfg_dropout(bundle, rng, p_uncond, frames=model.config.frames,
                             per_branch=model.config.cfg_per_branch)
        t = sample_timestep(rng, model.schedule.timesteps, t_bias)
        eps = rng.standard_normal(z0.shape).astype(np.float32)
        z_t = q_sample(z0, t, eps, model.schedule).astype(np.float32)
        eps_pred = model.predict_eps(z_t, t, bundle)
        loss = T.mse_loss(eps_pred, T.Tensor(eps))
        if not np.isfinite(loss.data):
            raise FloatingPointError("non-finite training loss")
        loss.backward(np.asarray(inv_b, dtype=np.float32))
        total += float(loss.data)
    optimizer.step()
    return total * inv_b


def train(model, dataset, stage_cfg, batch_size=2, lr=1e-5, p_uncond=0.05,
          seed=0, log_every=100, log_fn=None, t_bias="late"):
    """Run one stage; returns the per-step loss history."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    apply_freeze(model, stage_cfg)
    if not model.has_latent_stats():
        model.calibrate_latent_stats(
            [dataset[i].video for i in range(min(32, len(dataset)))])
    optimizer = nn.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    for it in range(stage_cfg.iterations):
        idx = rng.integers(0, len(dataset), size=batch_size)
        samples = [dataset[int(i)] for i in idx]
        loss = train_step(model, samples, rng, optimizer, p_uncond, t_bias)
        history.append(loss)
        if log_fn is not None and ((it + 1) % log_every == 0 or it == 0):
            log_fn(it + 1, loss)
    return history


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(model, ckpt_dir, stage=0, iteration=0):
    params_dir = os.path.join(ckpt_dir, "params")
    os.makedirs(params_dir, exist_ok=True)
    manifest = {
        "params": {},
        "stage": int(stage),
        "iteration": int(iteration),
        "schedule": model.schedule.to_json(),
        "config": model.config.to_json(),
        "latent_stats": {"mu": model.latent_mu.tolist(),
                         "sigma": model.latent_sigma.tolist()},
    }
    for name, p in model.named_parameters():
        rel = os.path.join("params", name + ".tnsr")
        save_tnsr(os.path.join(ckpt_dir, rel), p.data)
        manifest["params"][name] = rel
    with open(os.path.join(ckpt_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def load_checkpoint(ckpt_dir):
    with open(os.path.join(ckpt_dir, "manifest.json")) as f:
        manifest = json.load(f)
    model = ControlDiffusionModel(ModelConfig.from_json(manifest["config"]))
    state = {name: load_tnsr(os.path.join(ckpt_dir, rel)).astype(np.float32)
             for name, rel in manifest["params"].items()}
    model.load_state_arrays(state)
    stats = manifest.get("latent_stats")
    if stats is not None:
        model.latent_mu = np.asarray(stats["mu"], dtype=np.float32)
        model.latent_sigma = np.asarray(stats["sigma"], dtype=np.float32)
    return model, manifest
