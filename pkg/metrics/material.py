"""Material-classification consistency and the synthetic roughness oracle."""

import logging
from typing import Dict, Optional, Protocol, Sequence

import numpy as np
from skimage.color import rgb2gray
from skimage.filters import sobel

from utils.errors import ValidationError

logger = logging.getLogger("vt.metrics")

ORACLE_ID = "roughness-oracle-v1"
LUMINANCE_FLOOR = 1e-6


class MaterialClassifier(Protocol):
    classifier_id: str

    def predict(self, images: Sequence[np.ndarray]) -> np.ndarray:
        ...


def texture_statistic(image: np.ndarray) -> float:
    """Mean Sobel gradient magnitude of luminance over mean luminance; flat albedo cancels out."""
    unit = np.clip((np.asarray(image, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)
    luminance = rgb2gray(unit)
    return float(sobel(luminance).mean() / max(luminance.mean(), LUMINANCE_FLOOR))


class RoughnessOracle:
    """Nearest-centroid classifier over :func:`texture_statistic`."""

    classifier_id = ORACLE_ID

    def __init__(self, centroids: Optional[Dict[int, float]] = None):
        self.centroids: Dict[int, float] = dict(centroids or {})

    def fit(self, images: Sequence[np.ndarray], labels: Sequence[int]) -> "RoughnessOracle":
        if len(images) != len(labels) or len(images) == 0:
            raise ValidationError(f"oracle needs matching non-empty images and labels, got {len(images)} and {len(labels)}")
        stats = np.array([texture_statistic(image) for image in images])
        labels = np.asarray(labels, dtype=np.int64)
        self.centroids = {int(c): float(stats[labels == c].mean()) for c in np.unique(labels)}
        logger.debug(f"Oracle centroids: {self.centroids}")
        return self

    def predict(self, images: Sequence[np.ndarray]) -> np.ndarray:
        if not self.centroids:
            raise ValidationError("roughness oracle has not been fitted")
        classes = np.array(sorted(self.centroids))
        centres = np.array([self.centroids[c] for c in classes])
        stats = np.array([texture_statistic(image) for image in images])
        return classes[np.argmin(np.abs(stats[:, None] - centres[None, :]), axis=1)]


def material_consistency(
    generated: Sequence[np.ndarray],
    reference: Sequence[np.ndarray],
    classifier: MaterialClassifier,
) -> float:
    """Fraction of (generated, reference) pairs the classifier puts in the same class."""
    if len(generated) != len(reference):
        raise ValidationError(f"{len(generated)} generated images but {len(reference)} references")
    if len(generated) == 0:
        raise ValidationError("no pairs to classify")
    agree = np.asarray(classifier.predict(generated)) == np.asarray(classifier.predict(reference))
    return float(agree.mean())
