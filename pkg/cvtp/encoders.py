"""Temporal clip encoders with early fusion."""

from typing import Literal, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Field, field_validator
from torchvision.models import resnet18

from data.types import Clip
from utils.errors import NumericError, ValidationError

EMBED_DIM = 512


class EncoderConfig(BaseModel):
    """Backbone descriptor of one clip encoder."""

    backbone: Literal["resnet18", "tiny"] = "resnet18"
    window: int = Field(5, ge=1, description="Frames per clip w = 2C+1")
    embed_dim: int = Field(EMBED_DIM, ge=1)
    temperature: float = Field(0.07, gt=0.0)
    tiny_width: int = Field(16, ge=1, description="Channels of the two-layer backbone")

    @field_validator("window")
    @classmethod
    def validate_window(cls, v: int) -> int:
        if v % 2 != 1:
            raise ValueError("clip window must be odd")
        return v

    @property
    def in_channels(self) -> int:
        return 3 * self.window


def _resnet18_backbone(in_channels: int) -> nn.Module:
    net = resnet18(weights=None)
    # early fusion: all w frames enter the first convolution together
    net.conv1 = nn.Conv2d(in_channels, 64, kernel_size=7, stride=2, padding=3, bias=False)
    net.fc = nn.Identity()
    return net


class TinyBackbone(nn.Module):
    """Two smooth convolutions and global pooling; used for gradient checks and fast tests."""

    def __init__(self, in_channels: int, width: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, width, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(width, width, kernel_size=3, stride=2, padding=1)
        self.out_features = width

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.tanh(self.conv1(x))
        x = torch.tanh(self.conv2(x))
        return x.mean(dim=(2, 3))


class ClipEncoder(nn.Module):
    """Maps a (B, 3w, H, W) early-fusion clip to unit-norm ``embed_dim`` vectors."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        if config.backbone == "resnet18":
            self.backbone = _resnet18_backbone(config.in_channels)
            feature_dim = 512
        else:
            self.backbone = TinyBackbone(config.in_channels, config.tiny_width)
            feature_dim = config.tiny_width
        self.feature_dim = feature_dim
        self.projection = nn.Linear(feature_dim, config.embed_dim)

    def features(self, clips: torch.Tensor) -> torch.Tensor:
        """Penultimate (pooled backbone) features, the default Fréchet-distance extractor."""
        if clips.shape[1] != self.config.in_channels:
            raise ValidationError(
                f"encoder expects {self.config.window}-frame clips ({self.config.in_channels} channels), "
                f"got {clips.shape[1]} channels"
            )
        return self.backbone(clips)

    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        embeddings = F.normalize(self.projection(self.features(clips)), dim=-1)
        if not torch.isfinite(embeddings).all():
            raise NumericError("clip encoder produced non-finite embeddings")
        return embeddings


def clips_to_batch(clips: Union[Clip, Sequence[Clip]]) -> torch.Tensor:
    if isinstance(clips, Clip):
        clips = [clips]
    return torch.stack([clip.to_tensor() for clip in clips])


def _encode(clips, encoder: ClipEncoder) -> np.ndarray:
    batch = clips_to_batch(clips)
    window = batch.shape[1] // 3
    if window != encoder.config.window:
        raise ValidationError(f"clip has {window} frames, encoder is configured for {encoder.config.window}")
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            embeddings = encoder(batch.to(next(encoder.parameters()).dtype))
    finally:
        encoder.train(was_training)
    result = embeddings.numpy()
    return result[0] if isinstance(clips, Clip) else result


def encode_visual_clip(clip, encoder: ClipEncoder) -> np.ndarray:
    """ConditionEmbedding of a visual clip (or a list of clips), evaluation mode."""
    return _encode(clip, encoder)


def encode_tactile_clip(clip, encoder: ClipEncoder) -> np.ndarray:
    """ConditionEmbedding of a tactile clip (or a list of clips), evaluation mode."""
    return _encode(clip, encoder)
