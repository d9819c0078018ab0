from .codec import latent_encode, latent_decode, latent_shape, PATCH
from .schedule import NoiseSchedule, q_sample
from .conditioning import (ConditionBundle, BRANCHES, cfg_dropout,
                           substitute_nulls, null_bundle)
from .model import ModelConfig, ControlDiffusionModel, LightMLP, timestep_embedding
from .sampling import ddim_sample, ddim_timesteps, sample_video
from .training import (StageConfig, make_stage, apply_freeze, train_step, train,
                       save_checkpoint, load_checkpoint, TrainSample)

__all__ = [
    "latent_encode", "latent_decode", "latent_shape", "PATCH",
    "NoiseSchedule", "q_sample",
    "ConditionBundle", "BRANCHES", "cfg_dropout", "substitute_nulls", "null_bundle",
    "ModelConfig", "ControlDiffusionModel", "LightMLP", "timestep_embedding",
    "ddim_sample", "ddim_timesteps", "sample_video",
    "StageConfig", "make_stage", "apply_freeze", "train_step", "train",
    "save_checkpoint", "load_checkpoint", "TrainSample",
]
