"""Classifier-free guidance and the strided DDPM reverse chain."""

import logging
import math
from typing import Callable, List, Optional, Sequence

import torch
from pydantic import BaseModel, Field
from tqdm import tqdm

from utils.errors import ValidationError

from .schedule import NoiseSchedule, q_sample

logger = logging.getLogger("vt.diffusion")

Denoiser = Callable[..., torch.Tensor]


class GuidanceConfig(BaseModel):
    """Classifier-free guidance settings; the null condition is the zero embedding."""

    scale: float = Field(7.5, ge=0.0)
    drop_prob: float = Field(0.1, ge=0.0, lt=1.0)


def _evaluate(denoiser: Denoiser, z_t, t, cond, concat):
    return denoiser(z_t, t, cond, concat) if concat is not None else denoiser(z_t, t, cond)


def cfg_eps(
    denoiser: Denoiser,
    z_t: torch.Tensor,
    t,
    cond: torch.Tensor,
    guidance: GuidanceConfig,
    concat: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """ε̃ = ε(z,t,∅) + s·(ε(z,t,c) − ε(z,t,∅)) from two denoiser evaluations.

    ``s = 1`` returns the conditional branch and ``s = 0`` the unconditional
    branch unchanged.
    """
    eps_cond = _evaluate(denoiser, z_t, t, cond, concat)
    eps_null = _evaluate(denoiser, z_t, t, torch.zeros_like(cond), concat)
    if eps_cond.shape != eps_null.shape:
        raise ValidationError("conditional and unconditional predictions differ in shape")
    if guidance.scale == 1.0:
        return eps_cond
    if guidance.scale == 0.0:
        return eps_null
    return eps_null + guidance.scale * (eps_cond - eps_null)


def ddpm_step(
    z_t: torch.Tensor,
    t: int,
    eps: torch.Tensor,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator] = None,
    t_prev: Optional[int] = None,
) -> torch.Tensor:
    """One reverse step from ``t`` to ``t_prev`` (default ``t - 1``).

    With α = ᾱ_t/ᾱ_prev and β = 1 − α the update is the DDPM posterior
    (1/√α)(z_t − β/√(1−ᾱ_t)·ε̃) + σ·n with σ² = β(1−ᾱ_prev)/(1−ᾱ_t).
    For ``t_prev = t − 1`` these are the per-step α_t and β_t. No noise is
    drawn when ``t_prev = 0``.
    """
    t = sched.check_timestep(t, low=1)
    t_prev = t - 1 if t_prev is None else sched.check_timestep(t_prev)
    if t_prev >= t:
        raise ValidationError(f"reverse step must decrease the timestep, got {t} -> {t_prev}")

    alpha_bar = float(sched.alpha_bars[t])
    alpha_bar_prev = float(sched.alpha_bars[t_prev])
    if t_prev == t - 1:
        alpha, beta = float(sched.alphas[t]), float(sched.betas[t])
    else:
        alpha = alpha_bar / alpha_bar_prev
        beta = 1.0 - alpha

    mean = (z_t - (beta / math.sqrt(1.0 - alpha_bar)) * eps) / math.sqrt(alpha)
    if t_prev == 0:
        return mean
    sigma = math.sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar))
    noise = torch.randn(z_t.shape, generator=generator, dtype=z_t.dtype)
    return mean + sigma * noise


def timestep_sequence(sched: NoiseSchedule, steps: int) -> List[int]:
    """``steps`` evenly strided timesteps from T down to the smallest stride, strictly decreasing."""
    if not 1 <= steps <= sched.timesteps:
        raise ValidationError(f"sampling steps must lie in [1, {sched.timesteps}], got {steps}")
    stride = sched.timesteps / steps
    return [int(round(sched.timesteps - i * stride)) for i in range(steps)]


def _reverse_chain(
    denoiser: Denoiser,
    z: torch.Tensor,
    sequence: Sequence[int],
    cond: torch.Tensor,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator],
    concat: Optional[torch.Tensor],
    progress: bool,
) -> torch.Tensor:
    for index, t in enumerate(tqdm(sequence, desc="sampling", unit="step", disable=not progress, leave=False)):
        t_prev = sequence[index + 1] if index + 1 < len(sequence) else 0
        eps = cfg_eps(denoiser, z, t, cond, guidance, concat)
        z = ddpm_step(z, t, eps, sched, generator, t_prev=t_prev)
    return z


@torch.no_grad()
def sample(
    denoiser: Denoiser,
    cond: torch.Tensor,
    shape: Sequence[int],
    sched: NoiseSchedule,
    guidance: GuidanceConfig,
    generator: Optional[torch.Generator] = None,
    steps: int = 200,
    concat: Optional[torch.Tensor] = None,
    progress: bool = False,
) -> torch.Tensor:
    """Draw latents of ``shape`` (B, C, h, w) from pure noise with the strided reverse chain."""
    sequence = timestep_sequence(sched, steps)
    z = torch.randn(tuple(shape), generator=generator, dtype=cond.dtype)
    logger.debug(f"Sampling {tuple(shape)} over {len(sequence)} steps, guidance {guidance.scale}")
    return _reverse_chain(denoiser, z, sequence, cond, guidance, sched, generator, concat, progress)


@torch.no_grad()
def sdedit_sample(
    denoiser: Denoiser,
    z0: torch.Tensor,
    level: int,
    cond: torch.Tensor,
    sched: NoiseSchedule,
    guidance: GuidanceConfig,
    generator: Optional[torch.Generator] = None,
    steps: int = 200,
    concat: Optional[torch.Tensor] = None,
    progress: bool = False,
) -> torch.Tensor:
    """Noise ``z0`` to level N and denoise back to 0 under ``cond``.

    N = 0 returns ``z0`` unchanged. N = T starts from the noise draw itself,
    so the chain is the one :func:`sample` runs with the same generator.
    Intermediate levels reuse the strided timesteps below N.
    """
    level = sched.check_timestep(level)
    if level == 0:
        return z0.clone()
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    z = eps if level == sched.timesteps else q_sample(z0, level, eps, sched)
    sequence = [level] + [t for t in timestep_sequence(sched, steps) if t < level]
    return _reverse_chain(denoiser, z, sequence, cond, guidance, sched, generator, concat, progress)
