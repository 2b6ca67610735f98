"""Paired image-quality metrics over ImageFrames in [-1, 1]."""

import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from utils.errors import ValidationError

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
PSNR_CAP = 100.0


def _unit_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"images differ in shape: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValidationError(f"images must be H×W×3, got {a.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValidationError(f"images must be at least {SSIM_WINDOW}×{SSIM_WINDOW}")
    return (a + 1.0) / 2.0, (b + 1.0) / 2.0


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Gaussian-windowed SSIM (11×11, σ=1.5, unit dynamic range), mean over valid windows and channels."""
    a, b = _unit_pair(a, b)
    return float(
        structural_similarity(
            a,
            b,
            data_range=1.0,
            channel_axis=2,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
        )
    )


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10·log10(1/MSE) in dB over unit-range images, capped at 100 dB."""
    a, b = _unit_pair(a, b)
    mse = mean_squared_error(a, b)
    if mse == 0.0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP))
