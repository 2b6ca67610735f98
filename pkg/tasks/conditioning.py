"""Condition encoders feeding the denoiser's cross-attention context."""

import logging
from typing import Dict, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from cvtp.encoders import ClipEncoder, EncoderConfig
from cvtp.trainer import CvtpModel
from data.dataset import frame_to_tensor
from data.types import Clip
from utils.errors import ConfigurationError, ValidationError

from .spec import TaskSpec

logger = logging.getLogger("vt.tasks")

Batch = Dict[str, torch.Tensor]


class Conditioner(nn.Module):
    """Maps a batch dict to (B, d) condition embeddings."""

    embed_dim: int

    def forward(self, batch: Batch) -> torch.Tensor:
        raise NotImplementedError


class ClipConditioner(Conditioner):
    """Early-fusion clip encoder over the full ``w``-frame window of one modality."""

    def __init__(self, config: EncoderConfig, modality: str):
        super().__init__()
        self.encoder = ClipEncoder(config)
        self.modality = modality
        self.embed_dim = config.embed_dim

    def forward(self, batch: Batch) -> torch.Tensor:
        return self.encoder(batch[self.modality])


class SingleFrameConditioner(Conditioner):
    """Clip encoder that only sees the contact frame."""

    def __init__(self, config: EncoderConfig, modality: str):
        super().__init__()
        self.encoder = ClipEncoder(config.model_copy(update={"window": 1}))
        self.modality = modality
        self.embed_dim = config.embed_dim

    def forward(self, batch: Batch) -> torch.Tensor:
        return self.encoder(batch[f"{self.modality}_center"])


class LabelConditioner(Conditioner):
    """Learned material-class embedding, normalised like the clip embeddings."""

    def __init__(self, num_classes: int, embed_dim: int):
        super().__init__()
        self.embedding = nn.Embedding(num_classes, embed_dim)
        self.embed_dim = embed_dim

    def forward(self, batch: Batch) -> torch.Tensor:
        labels = batch["label"].long()
        if labels.min() < 0 or labels.max() >= self.embedding.num_embeddings:
            raise ValidationError(f"material label outside 0..{self.embedding.num_embeddings - 1}")
        return F.normalize(self.embedding(labels), dim=-1)


class NullConditioner(Conditioner):
    """Always the zero (null) condition: an unconditional model."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.embed_dim = embed_dim

    def forward(self, batch: Batch) -> torch.Tensor:
        size = next(iter(batch.values())).shape[0]
        return torch.zeros(size, self.embed_dim, dtype=torch.get_default_dtype())


def build_conditioner(
    spec: TaskSpec,
    encoder_config: EncoderConfig,
    num_classes: int,
    cvtp_model: Optional[CvtpModel] = None,
) -> Conditioner:
    """Conditioner for ``spec.condition_source``; clip encoders start from CVTP weights when given."""
    modality = spec.condition_modality
    if spec.condition_source == "clip":
        conditioner = ClipConditioner(encoder_config, modality)
        if cvtp_model is not None:
            if cvtp_model.encoder_config != encoder_config:
                raise ConfigurationError("CVTP checkpoint encoder config differs from the task encoder config")
            pretrained = cvtp_model.tactile_encoder if modality == "tactile" else cvtp_model.visual_encoder
            conditioner.encoder.load_state_dict(pretrained.state_dict())
            logger.info(f"Initialised the {modality} clip encoder from the CVTP checkpoint")
        return conditioner
    if spec.condition_source == "single_frame":
        if cvtp_model is not None:
            logger.warning("single-frame conditioning ignores the multi-frame CVTP checkpoint")
        return SingleFrameConditioner(encoder_config, modality)
    if spec.condition_source == "material_label":
        return LabelConditioner(num_classes, encoder_config.embed_dim)
    return NullConditioner(encoder_config.embed_dim)


def condition_inputs(clip: Clip, modality: str, label: Optional[int] = None) -> Batch:
    """Single-item batch dict for a conditioning clip (and optional material label)."""
    batch = {
        modality: clip.to_tensor()[None],
        f"{modality}_center": frame_to_tensor(clip.center)[None],
    }
    if label is not None:
        batch["label"] = torch.tensor([label], dtype=torch.long)
    return batch
