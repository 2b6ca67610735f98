"""InfoNCE against a memory bank and the symmetric visuo-tactile objective."""

import torch
import torch.nn.functional as F

from utils.errors import NumericError, ValidationError

from .memory_bank import MemoryBank


def infonce_loss(anchor: torch.Tensor, positive: torch.Tensor, bank: MemoryBank, temperature: float) -> torch.Tensor:
    """Mean over anchors of -log softmax(a·b/τ) at the positive's slot.

    The bank supplies K candidates; the positive of anchor i replaces the bank
    entry in slot ``bank.positive_slots(n)[i]``, so the denominator holds
    exactly K terms including the fresh positive.
    """
    if temperature <= 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    if anchor.dim() == 1:
        anchor, positive = anchor[None], positive[None]
    if anchor.shape != positive.shape:
        raise ValidationError(f"anchor {tuple(anchor.shape)} and positive {tuple(positive.shape)} differ")
    if not (torch.isfinite(anchor).all() and torch.isfinite(positive).all()):
        raise NumericError("non-finite embeddings in InfoNCE")

    candidates = bank.with_positives(positive)
    logits = anchor @ candidates.T / temperature
    targets = bank.positive_slots(anchor.shape[0])
    return F.cross_entropy(logits, targets)


def cvtp_loss(
    visual: torch.Tensor,
    tactile: torch.Tensor,
    visual_bank: MemoryBank,
    tactile_bank: MemoryBank,
    temperature: float,
) -> torch.Tensor:
    """Visual-anchored term against the tactile bank plus the tactile-anchored term against the visual bank."""
    visual_to_tactile = infonce_loss(visual, tactile, tactile_bank, temperature)
    tactile_to_visual = infonce_loss(tactile, visual, visual_bank, temperature)
    return visual_to_tactile + tactile_to_visual
