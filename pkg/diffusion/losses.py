"""Noise-prediction training objective (plain, masked and concatenated variants)."""

from typing import Callable, Optional, Tuple, Union

import torch

from utils.errors import ValidationError

from .schedule import NoiseSchedule, q_sample

Denoiser = Callable[..., torch.Tensor]


def drop_conditions(cond: torch.Tensor, drop_prob: float, generator: Optional[torch.Generator]) -> torch.Tensor:
    """Replace each row of ``cond`` by the zero (null) condition with probability ``drop_prob``."""
    if not 0.0 <= drop_prob < 1.0:
        raise ValidationError(f"condition-drop probability must lie in [0, 1), got {drop_prob}")
    if drop_prob == 0.0:
        return cond
    keep = torch.rand(cond.shape[0], generator=generator, dtype=torch.float64) >= drop_prob
    return cond * keep.to(cond.dtype)[:, None]


def sample_timesteps(batch: int, sched: NoiseSchedule, generator: Optional[torch.Generator]) -> torch.Tensor:
    """Uniform draws from {1..T}."""
    return torch.randint(1, sched.timesteps + 1, (batch,), generator=generator)


def eps_loss(
    denoiser: Denoiser,
    z0: torch.Tensor,
    cond: torch.Tensor,
    sched: NoiseSchedule,
    generator: Optional[torch.Generator] = None,
    mask: Optional[torch.Tensor] = None,
    concat: Optional[torch.Tensor] = None,
    drop_prob: float = 0.0,
    t: Optional[torch.Tensor] = None,
    noise: Optional[torch.Tensor] = None,
    return_prediction: bool = False,
) -> Union[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    """Mean squared error between the added noise and ε_θ's prediction.

    Args:
        denoiser: Callable ``(z_t, t, cond, concat=None) -> ε̂``.
        z0: Clean latents (B, C, h, w).
        cond: Condition embeddings (B, d); rows are zeroed with ``drop_prob``.
        sched: Noise schedule.
        generator: Source of t, ε and the condition-drop draws.
        mask: Latent hand mask (B, 1, h, w) or (B, h, w); 0 cells are excluded and
            the mean runs over kept elements only. An all-zero mask gives loss 0.
        concat: Conditioning map (reflectance or reference latent) joined to z_t.
        drop_prob: Condition-drop probability for classifier-free guidance.
        t: Optional fixed timesteps instead of uniform draws.
        noise: Optional fixed ε instead of a fresh draw.
        return_prediction: Also return ε̂ (for the masked-gradient check).
    """
    batch = z0.shape[0]
    if cond.shape[0] != batch:
        raise ValidationError(f"{cond.shape[0]} conditions for a batch of {batch} latents")
    if concat is not None and tuple(concat.shape[-2:]) != tuple(z0.shape[-2:]):
        raise ValidationError(f"concatenated map {tuple(concat.shape[-2:])} does not match latent {tuple(z0.shape[-2:])}")

    if t is None:
        t = sample_timesteps(batch, sched, generator)
    if noise is None:
        noise = torch.randn(z0.shape, generator=generator, dtype=z0.dtype)
    cond = drop_conditions(cond, drop_prob, generator)

    z_t = q_sample(z0, t, noise, sched)
    prediction = denoiser(z_t, t, cond, concat) if concat is not None else denoiser(z_t, t, cond)
    residual = noise - prediction

    if mask is None:
        loss = (residual ** 2).mean()
    else:
        if mask.dim() == 3:
            mask = mask[:, None]
        if mask.shape[0] != batch or tuple(mask.shape[-2:]) != tuple(z0.shape[-2:]):
            raise ValidationError(f"mask {tuple(mask.shape)} does not match latent {tuple(z0.shape)}")
        mask = mask.to(residual.dtype)
        kept = mask.expand_as(residual).sum()
        loss = ((residual * mask) ** 2).sum() / kept.clamp_min(1.0)

    return (loss, prediction) if return_prediction else loss
