import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tricraft.diffusion import ControlDiffusionModel, ModelConfig
from tricraft.lighting import LightSpec
from tricraft.motion import FlowField


TINY = ModelConfig(frames=3, video_height=32, video_width=32,
                   stage_widths=(8, 12, 16, 24), d_model=24, d_cond=8,
                   temb_dim=16, groups=4, text_vocab=16, timesteps=50, seed=7)


@pytest.fixture(scope="session")
def tiny_model():
    return ControlDiffusionModel(TINY)


def make_controls(cfg, seed=0):
    """Random-but-valid raw controls for a tiny model."""
    rng = np.random.default_rng(seed)
    f, h, w = cfg.frames, cfg.video_height, cfg.video_width
    video = rng.random((f, 3, h, w)).astype(np.float32)
    renders = rng.random((f, h, w, 3)).astype(np.float32)
    flow = FlowField(rng.standard_normal((f, h, w, 2)).astype(np.float32))
    dirs = rng.standard_normal((f, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    light = LightSpec(dirs)
    text_ids = np.array([1, 5])
    return video, renders, flow, light, text_ids
