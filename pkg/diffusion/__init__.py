"""Conditional denoising diffusion: schedule, denoisers, objective and samplers."""

from .losses import drop_conditions, eps_loss, sample_timesteps
from .sampling import GuidanceConfig, cfg_eps, ddpm_step, sample, sdedit_sample, timestep_sequence
from .schedule import NoiseSchedule, make_schedule, q_sample, schedule_from_dict
from .unet import DenoiserConfig, TinyDenoiser, UNet, build_denoiser, timestep_embedding

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "schedule_from_dict",
    "q_sample",
    "DenoiserConfig",
    "UNet",
    "TinyDenoiser",
    "build_denoiser",
    "timestep_embedding",
    "eps_loss",
    "drop_conditions",
    "sample_timesteps",
    "GuidanceConfig",
    "cfg_eps",
    "ddpm_step",
    "timestep_sequence",
    "sample",
    "sdedit_sample",
]
