"""Image <-> latent codecs.

Three kinds share one interface:

* ``identity``: diffusion runs directly on pixels (factor 1).
* ``pool``: block mean down, nearest-neighbour up, factor ``f``.
* ``learned``: strided convolution down, transposed convolution up, with
  frozen weights read from a checkpoint archive.
"""

import logging
from pathlib import Path
from typing import Literal, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from utils.checkpoint import load_archive, load_module
from utils.errors import ConfigurationError, ValidationError

logger = logging.getLogger("vt.codec")

LATENT_CHANNELS = 3


class CodecSpec(BaseModel):
    """Which codec a model was trained with; recorded in every bundle."""

    kind: Literal["identity", "pool", "learned"] = "identity"
    factor: int = Field(1, ge=1, description="Spatial downsampling factor f = H/h")
    weights: Optional[str] = Field(None, description="Checkpoint archive for the learned kind")

    @model_validator(mode="after")
    def validate_kind(self):
        if self.kind == "identity" and self.factor != 1:
            raise ValueError("identity codec has factor 1")
        if self.kind == "learned" and not self.weights:
            raise ValueError("learned codec needs a weights archive")
        return self

    def latent_shape(self, height: int, width: int) -> Tuple[int, int]:
        if height % self.factor or width % self.factor:
            raise ValidationError(f"image {height}×{width} is not divisible by codec factor {self.factor}")
        return height // self.factor, width // self.factor


class LearnedCodec(nn.Module):
    """Single-layer first stage: ``Conv(f, stride f)`` / ``ConvTranspose(f, stride f)``."""

    def __init__(self, factor: int):
        super().__init__()
        self.encoder = nn.Conv2d(3, LATENT_CHANNELS, kernel_size=factor, stride=factor)
        self.decoder = nn.ConvTranspose2d(LATENT_CHANNELS, 3, kernel_size=factor, stride=factor)

    @classmethod
    def from_archive(cls, path: str, factor: int) -> "LearnedCodec":
        if not Path(path).is_file():
            raise ConfigurationError(f"learned codec weights not found: {path}")
        module = cls(factor)
        load_module(module, load_archive(path), "codec.")
        module.eval()
        module.requires_grad_(False)
        return module


class Codec:
    """Batched torch codec for (B, 3, H, W) tensors."""

    def __init__(self, spec: CodecSpec):
        self.spec = spec
        self._learned = LearnedCodec.from_archive(spec.weights, spec.factor) if spec.kind == "learned" else None

    @property
    def factor(self) -> int:
        return self.spec.factor

    @torch.no_grad()
    def encode(self, images: torch.Tensor) -> torch.Tensor:
        self.spec.latent_shape(*images.shape[-2:])
        if self.spec.kind == "identity":
            return images.clone()
        if self.spec.kind == "pool":
            # float64 sums of float32 inputs are exact, so constant blocks stay constant
            pooled = F.avg_pool2d(images.double(), kernel_size=self.factor)
            return pooled.clamp(-1.0, 1.0).to(images.dtype)
        return self._learned.encoder(images)

    @torch.no_grad()
    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        if latents.shape[-3] != LATENT_CHANNELS:
            raise ValidationError(f"latent must have {LATENT_CHANNELS} channels, got {latents.shape[-3]}")
        if self.spec.kind == "identity":
            images = latents.clone()
        elif self.spec.kind == "pool":
            images = latents.repeat_interleave(self.factor, dim=-2).repeat_interleave(self.factor, dim=-1)
        else:
            images = self._learned.decoder(latents)
        return images.clamp(-1.0, 1.0)


def build_codec(spec: CodecSpec) -> Codec:
    return Codec(spec)


def _check_hw3(array: np.ndarray, name: str) -> np.ndarray:
    array = np.asarray(array, dtype=np.float32)
    if array.ndim != 3 or array.shape[2] != LATENT_CHANNELS:
        raise ValidationError(f"{name} must be H×W×3, got shape {array.shape}")
    return array


def encode_image(x: np.ndarray, spec: CodecSpec, codec: Optional[Codec] = None) -> np.ndarray:
    """Encode one H×W×3 ImageFrame into an h×w×3 LatentCode."""
    x = _check_hw3(x, "image")
    spec.latent_shape(x.shape[0], x.shape[1])
    codec = codec or build_codec(spec)
    z = codec.encode(torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))[None])[0]
    return np.ascontiguousarray(z.numpy().transpose(1, 2, 0))


def decode_latent(z: np.ndarray, spec: CodecSpec, codec: Optional[Codec] = None) -> np.ndarray:
    """Decode an h×w×3 LatentCode into an (h·f)×(w·f)×3 ImageFrame clamped to [-1, 1]."""
    z = _check_hw3(z, "latent")
    codec = codec or build_codec(spec)
    x = codec.decode(torch.from_numpy(np.ascontiguousarray(z.transpose(2, 0, 1)))[None])[0]
    return np.ascontiguousarray(x.numpy().transpose(1, 2, 0))
