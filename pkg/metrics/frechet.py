"""Fréchet distance between Gaussian fits of two feature sets."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from scipy import linalg

from cvtp.encoders import ClipEncoder
from data.types import VisualClip
from utils.errors import NumericError, ValidationError

logger = logging.getLogger("vt.metrics")

EIGEN_TOLERANCE = 1e-8
CVTP_EXTRACTOR_ID = "cvtp-visual-penultimate"


@dataclass(frozen=True)
class FeatureSet:
    """n×d per-image features and the id of the extractor that produced them."""

    features: np.ndarray
    extractor_id: str

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ValidationError(f"features must be an n×d matrix, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValidationError("features must be finite")
        object.__setattr__(self, "features", features)

    @property
    def count(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def moments(self):
        """Mean and 1/(n−1) covariance."""
        if self.count < 2:
            raise ValidationError(f"Fréchet distance needs at least 2 samples, got {self.count}")
        mu = self.features.mean(axis=0)
        sigma = np.atleast_2d(np.cov(self.features, rowvar=False, ddof=1))
        return mu, sigma


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh((matrix + matrix.T) / 2.0)
    if values.min() < -EIGEN_TOLERANCE:
        logger.warning(f"clamping eigenvalue {values.min():.3e} below tolerance to zero")
    values = np.clip(values, 0.0, None)
    return (vectors * np.sqrt(values)) @ vectors.T


def frechet_from_moments(mu_a: np.ndarray, sigma_a: np.ndarray, mu_b: np.ndarray, sigma_b: np.ndarray) -> float:
    """‖μ_A−μ_B‖² + tr(Σ_A + Σ_B − 2(Σ_A Σ_B)^{1/2}), clamped at 0."""
    mu_a, mu_b = np.atleast_1d(mu_a).astype(np.float64), np.atleast_1d(mu_b).astype(np.float64)
    sigma_a, sigma_b = np.atleast_2d(sigma_a).astype(np.float64), np.atleast_2d(sigma_b).astype(np.float64)
    if mu_a.shape != mu_b.shape or sigma_a.shape != sigma_b.shape:
        raise ValidationError(f"feature dimensions differ: {mu_a.shape[0]} vs {mu_b.shape[0]}")

    # tr((Σ_A Σ_B)^½) = tr((Σ_A^½ Σ_B Σ_A^½)^½), the inner product being symmetric PSD
    root_a = _psd_sqrt(sigma_a)
    inner = linalg.eigvalsh(root_a @ sigma_b @ root_a)
    trace_sqrt = float(np.sqrt(np.clip(inner, 0.0, None)).sum())

    diff = mu_a - mu_b
    distance = float(diff @ diff + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * trace_sqrt)
    if not np.isfinite(distance):
        raise NumericError("Fréchet distance is not finite")
    return max(distance, 0.0)


def frechet_distance(a: FeatureSet, b: FeatureSet) -> float:
    """Fréchet distance between two feature sets of the same extractor."""
    if a.dim != b.dim:
        raise ValidationError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    if a.extractor_id != b.extractor_id:
        raise ValidationError(f"feature sets come from different extractors: {a.extractor_id} vs {b.extractor_id}")
    for features in (a, b):
        if features.count < features.dim:
            logger.warning(
                f"only {features.count} samples for {features.dim}-d features; the covariance is rank deficient"
            )
    return frechet_from_moments(*a.moments(), *b.moments())


def clip_features(images: Sequence[np.ndarray], encoder: ClipEncoder, extractor_id: str = CVTP_EXTRACTOR_ID) -> FeatureSet:
    """Penultimate clip-encoder features of single images replicated across the fusion window."""
    if len(images) == 0:
        raise ValidationError("no images to extract features from")
    clips = [VisualClip.replicate(np.asarray(image, dtype=np.float32), encoder.config.window) for image in images]
    batch = torch.stack([clip.to_tensor() for clip in clips]).to(next(encoder.parameters()).dtype)
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            features = encoder.features(batch)
    finally:
        encoder.train(was_training)
    return FeatureSet(features.double().numpy(), extractor_id)
