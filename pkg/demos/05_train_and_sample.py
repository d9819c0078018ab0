"""Train a pocket-sized model for a couple of minutes and sample from it
with different control subsets. Uses a reduced config (5 frames) so the
whole script stays interactive; the full-scale recipe lives in the README
and the acceptance suite."""

import os
import tempfile

import numpy as np

from tricraft import forge as F
from tricraft.diffusion import (ControlDiffusionModel, ModelConfig, make_stage, train)
from tricraft.diffusion.sampling import sample_video
from tricraft.images import save_png
from tricraft.metrics import psnr

out = os.path.join(os.path.dirname(__file__), "out", "samples")
os.makedirs(out, exist_ok=True)

cfg = ModelConfig(frames=5, video_height=32, video_width=64,
                  stage_widths=(16, 24, 32, 48), d_model=48, d_cond=16,
                  temb_dim=32, groups=4, timesteps=400, seed=0)
forge_cfg = F.ForgeConfig(frames=5, val_scenes=2)

with tempfile.TemporaryDirectory() as tmp:
    corpus = os.path.join(tmp, "corpus")
    F.build_training_corpus(corpus, 24, mode="both", seed=3, config=forge_cfg)
    dataset = F.CorpusDataset(corpus, split="train", trajectory_mode="dense")

    model = ControlDiffusionModel(cfg)
    losses = train(model, dataset, make_stage(1, iterations=300), batch_size=1,
                   lr=2e-3, seed=5,
                   log_fn=lambda it, l: print(f"  iter {it:3d} loss {l:.4f}"),
                   log_every=75)
    print(f"stage-1 loss {losses[0]:.3f} -> {np.mean(losses[-10:]):.3f}")

    val = F.CorpusDataset(corpus, split="val", trajectory_mode="sparse")
    s = val[0]
    full = model.build_bundle(s.ref_image(), s.text_ids, renders=s.renders,
                              flow=s.flow, light=s.light)
    nothing = model.build_bundle(s.ref_image(), s.text_ids)

    for name, bundle in (("all_controls", full), ("ref_only", nothing)):
        video = sample_video(model, bundle, steps=15, guidance=1.0, seed=9)
        for f in range(0, cfg.frames, 2):
            save_png(os.path.join(out, f"{name}_f{f}.png"), video[f].transpose(1, 2, 0))
        print(f"{name}: PSNR vs ground truth {psnr(video, np.clip(s.video, 0, 1)):.1f} dB")

print(f"wrote sampled frames to {out}")
