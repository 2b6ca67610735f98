"""Lossless 8-bit image IO and the pixel normalisation conventions."""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

MASK_THRESHOLD = 128


def to_frame(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit pixels to [-1, 1] with (2x/255) - 1."""
    return (pixels.astype(np.float64) * (2.0 / 255.0) - 1.0).astype(np.float32)


def from_frame(frame: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_frame`, rounding to the nearest 8-bit level."""
    return np.clip(np.rint((np.asarray(frame, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def read_rgb(path: Union[str, Path]) -> np.ndarray:
    """Read an image file as H×W×3 uint8."""
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"), dtype=np.uint8)


def read_frame(path: Union[str, Path]) -> np.ndarray:
    """Read an RGB file as an ImageFrame in [-1, 1]."""
    return to_frame(read_rgb(path))


def read_mask(path: Union[str, Path]) -> np.ndarray:
    """Read a single-channel mask; values >= 128 are kept (1), the rest are hand (0)."""
    with Image.open(path) as image:
        gray = np.asarray(image.convert("L"), dtype=np.uint8)
    return (gray >= MASK_THRESHOLD).astype(np.uint8)


def read_unit_rgb(path: Union[str, Path]) -> np.ndarray:
    """Read an RGB file mapped to [0, 1] (reflectance maps)."""
    return (read_rgb(path).astype(np.float64) / 255.0).astype(np.float32)


def read_unit_gray(path: Union[str, Path]) -> np.ndarray:
    """Read a single-channel file mapped to [0, 1] (shading maps)."""
    with Image.open(path) as image:
        gray = np.asarray(image.convert("L"), dtype=np.uint8)
    return (gray.astype(np.float64) / 255.0).astype(np.float32)


def _save(array: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format="PNG", optimize=False)
    return path


def write_frame(frame: np.ndarray, path: Union[str, Path]) -> Path:
    """Write an ImageFrame in [-1, 1] as an 8-bit RGB PNG."""
    return _save(from_frame(frame), path)


def write_mask(mask: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a binary mask as 0 (hand) / 255 (keep)."""
    return _save((np.asarray(mask) > 0).astype(np.uint8) * 255, path)


def write_unit_rgb(pixels: np.ndarray, path: Union[str, Path]) -> Path:
    """Write an H×W×3 array in [0, 1] as 8-bit RGB."""
    return _save(np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8), path)


def write_unit_gray(pixels: np.ndarray, path: Union[str, Path]) -> Path:
    """Write an H×W array in [0, 1] as 8-bit grayscale."""
    return _save(np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8), path)
