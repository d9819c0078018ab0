"""Forward-process noise schedule and q-sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["NoiseSchedule", "q_sample"]


@dataclass
class NoiseSchedule:
    """Linear-beta schedule; alphas_cumprod is strictly decreasing in (0,1]."""

    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    betas: np.ndarray = field(init=False)
    alphas_cumprod: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.linspace(self.beta_start, self.beta_end, self.timesteps, dtype=np.float64)
        if (betas <= 0).any() or (betas >= 1).any():
            raise ValueError("betas must lie in (0, 1)")
        if (np.diff(betas) < 0).any():
            raise ValueError("betas must be nondecreasing")
        self.betas = betas
        self.alphas_cumprod = np.cumprod(1.0 - betas)
        if (np.diff(self.alphas_cumprod) >= 0).any() or (self.alphas_cumprod <= 0).any():
            raise ValueError("alphas_cumprod must be strictly decreasing in (0, 1]")

    def to_json(self):
        return {"timesteps": self.timesteps, "beta_start": self.beta_start,
                "beta_end": self.beta_end}

    @staticmethod
    def from_json(obj):
        return NoiseSchedule(timesteps=int(obj["timesteps"]),
                             beta_start=float(obj["beta_start"]),
                             beta_end=float(obj["beta_end"]))


def q_sample(z0, t, eps, schedule):
    """Forward noising: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    if not 0 <= t < schedule.timesteps:
        raise ValueError(f"timestep {t} outside [0, {schedule.timesteps})")
    abar = schedule.alphas_cumprod[t]
    a = float(np.sqrt(abar))
    b = float(np.sqrt(1.0 - abar))
    return a * np.asarray(z0) + b * np.asarray(eps)
