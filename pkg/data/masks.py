"""Hand-mask handling at latent resolution."""

import numpy as np
import torch

from utils.errors import ValidationError

from .types import SegMask


def downsample_mask(mask: SegMask, h: int, w_lat: int) -> np.ndarray:
    """Block-minimum downsampling of a hand mask to the latent grid.

    A latent cell is 0 as soon as any source pixel in its block is a hand pixel.

    Args:
        mask: Full-resolution mask (0 = hand, 1 = keep).
        h: Latent height.
        w_lat: Latent width.

    Returns:
        h×w_lat uint8 array with values in {0, 1}.
    """
    pixels = mask.mask if isinstance(mask, SegMask) else SegMask(mask).mask
    height, width = pixels.shape
    if h < 1 or w_lat < 1 or height % h or width % w_lat:
        raise ValidationError(f"mask {height}×{width} cannot be downsampled to {h}×{w_lat}")
    blocks = pixels.reshape(h, height // h, w_lat, width // w_lat)
    return blocks.min(axis=(1, 3)).astype(np.uint8)


def downsample_mask_batch(masks: torch.Tensor, h: int, w_lat: int) -> torch.Tensor:
    """Torch version of :func:`downsample_mask` for (B, H, W) or (B, 1, H, W) batches."""
    if masks.dim() == 3:
        masks = masks.unsqueeze(1)
    height, width = masks.shape[-2:]
    if height % h or width % w_lat:
        raise ValidationError(f"mask {height}×{width} cannot be downsampled to {h}×{w_lat}")
    # min-pool as the negation of a max-pool
    pooled = -torch.nn.functional.max_pool2d(-masks.float(), kernel_size=(height // h, width // w_lat))
    return pooled
