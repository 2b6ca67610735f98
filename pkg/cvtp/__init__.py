"""Contrastive visuo-tactile pretraining."""

from .encoders import (
    EMBED_DIM,
    ClipEncoder,
    EncoderConfig,
    TinyBackbone,
    clips_to_batch,
    encode_tactile_clip,
    encode_visual_clip,
)
from .losses import cvtp_loss, infonce_loss
from .memory_bank import MemoryBank, bank_push
from .retrieval import retrieval_accuracy
from .trainer import CvtpModel, CvtpTrainConfig, build_cvtp_model, load_cvtp, save_cvtp, train_cvtp

__all__ = [
    "EMBED_DIM",
    "ClipEncoder",
    "EncoderConfig",
    "TinyBackbone",
    "clips_to_batch",
    "encode_visual_clip",
    "encode_tactile_clip",
    "infonce_loss",
    "cvtp_loss",
    "MemoryBank",
    "bank_push",
    "retrieval_accuracy",
    "CvtpModel",
    "CvtpTrainConfig",
    "build_cvtp_model",
    "train_cvtp",
    "save_cvtp",
    "load_cvtp",
]
