"""Variance schedule and the closed-form forward process."""

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
import torch

from utils.errors import ValidationError

BETA_START = 1e-4
BETA_END = 2e-2

ArrayLike = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    """Diffusion coefficients indexed by timestep ``0..T``.

    Index 0 is the clean-data convention: ``beta[0] = 0`` and
    ``alpha_bar[0] = 1``. Arrays are float64.
    """

    timesteps: int
    betas: np.ndarray
    kind: str = "linear"
    beta_start: float = BETA_START
    beta_end: float = BETA_END

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def check_timestep(self, t: int, low: int = 0) -> int:
        if not low <= int(t) <= self.timesteps:
            raise ValidationError(f"timestep {t} outside [{low}, {self.timesteps}]")
        return int(t)

    def to_dict(self) -> dict:
        return {
            "timesteps": self.timesteps,
            "kind": self.kind,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
        }


def make_schedule(
    timesteps: int = 1000,
    kind: Literal["linear"] = "linear",
    beta_start: float = BETA_START,
    beta_end: float = BETA_END,
) -> NoiseSchedule:
    """Linear β from ``beta_start`` to ``beta_end`` over ``timesteps`` steps."""
    if timesteps < 1:
        raise ValidationError(f"schedule needs at least one timestep, got {timesteps}")
    if kind != "linear":
        raise ValidationError(f"unknown schedule kind: {kind}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValidationError(f"β range must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}")
    betas = np.concatenate([[0.0], np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)])
    return NoiseSchedule(timesteps=timesteps, betas=betas, kind=kind, beta_start=beta_start, beta_end=beta_end)


def schedule_from_dict(payload: dict) -> NoiseSchedule:
    return make_schedule(payload["timesteps"], payload.get("kind", "linear"),
                         payload.get("beta_start", BETA_START), payload.get("beta_end", BETA_END))


def _batch_coefficient(values: np.ndarray, t: ArrayLike, like: torch.Tensor) -> torch.Tensor:
    table = torch.as_tensor(values, dtype=like.dtype, device=like.device)
    index = torch.as_tensor(t, device=like.device).long().reshape(-1)
    coefficient = table[index]
    return coefficient.reshape(-1, *([1] * (like.dim() - 1))) if index.numel() > 1 else coefficient.reshape(())


def q_sample(z0: ArrayLike, t: Union[int, ArrayLike], eps: ArrayLike, sched: NoiseSchedule) -> ArrayLike:
    """z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε.

    Args:
        z0: Clean latents, numpy array or torch tensor (batched when ``t`` is a vector).
        t: Timestep in ``[0, T]``, or one timestep per batch item.
        eps: Noise with the shape of ``z0``.
        sched: Noise schedule.
    """
    if tuple(z0.shape) != tuple(eps.shape):
        raise ValidationError(f"latent {tuple(z0.shape)} and noise {tuple(eps.shape)} differ in shape")
    steps = np.atleast_1d(t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t))
    if steps.min() < 0 or steps.max() > sched.timesteps:
        raise ValidationError(f"timestep outside [0, {sched.timesteps}]")

    if isinstance(z0, torch.Tensor):
        signal = _batch_coefficient(np.sqrt(sched.alpha_bars), t, z0)
        noise = _batch_coefficient(np.sqrt(1.0 - sched.alpha_bars), t, z0)
        return signal * z0 + noise * eps
    alpha_bar = sched.alpha_bars[int(t)]
    z0 = np.asarray(z0)
    return (np.sqrt(alpha_bar) * z0 + np.sqrt(1.0 - alpha_bar) * np.asarray(eps)).astype(z0.dtype)
