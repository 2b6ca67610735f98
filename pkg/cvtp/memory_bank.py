"""FIFO memory bank of detached unit embeddings."""

from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from utils.errors import ValidationError
from utils.rng import RngStreams

UNIT_TOLERANCE = 1e-4


class MemoryBank:
    """Ring buffer of K embeddings for one modality.

    The bank starts full of random unit vectors so the InfoNCE denominator
    always has K terms. ``cursor`` is the next slot to be overwritten; the
    positives of a batch of n anchors occupy slots ``cursor .. cursor+n-1``.
    """

    def __init__(self, capacity: int, dim: int, streams: Optional[RngStreams] = None, step: int = 0,
                 dtype: torch.dtype = torch.float32):
        if capacity < 1:
            raise ValidationError(f"memory bank capacity must be >= 1, got {capacity}")
        streams = streams or RngStreams(0)
        init = streams.numpy("bank", step).standard_normal((capacity, dim))
        self.entries = F.normalize(torch.from_numpy(init).to(dtype), dim=-1)
        self.cursor = 0

    @property
    def capacity(self) -> int:
        return int(self.entries.shape[0])

    @property
    def dim(self) -> int:
        return int(self.entries.shape[1])

    def positive_slots(self, count: int) -> torch.Tensor:
        if count > self.capacity:
            raise ValidationError(f"batch of {count} does not fit a bank of {self.capacity}")
        return (self.cursor + torch.arange(count)) % self.capacity

    def with_positives(self, positives: torch.Tensor) -> torch.Tensor:
        """Bank contents with the fresh (gradient-carrying) positives written into their slots."""
        slots = self.positive_slots(positives.shape[0])
        entries = self.entries.to(positives.dtype)
        return entries.index_copy(0, slots, positives)

    def read(self, offset: int = -1) -> torch.Tensor:
        """Entry at ``cursor + offset`` (``-1`` is the most recent push)."""
        return self.entries[(self.cursor + offset) % self.capacity]

    def state(self) -> dict:
        return {"entries": self.entries.clone(), "cursor": np.array([self.cursor], dtype=np.int64)}

    def load_state(self, entries: torch.Tensor, cursor: int) -> None:
        if entries.dim() != 2:
            raise ValidationError(f"bank entries must be K×d, got shape {tuple(entries.shape)}")
        self.entries = entries.clone()
        self.cursor = int(cursor) % self.capacity


def bank_push(bank: MemoryBank, embeddings: torch.Tensor) -> MemoryBank:
    """Write unit embeddings at the cursor and advance it modulo K.

    Args:
        bank: Bank to update in place.
        embeddings: A d-vector or an n×d batch of unit vectors; stored detached.

    Returns:
        The same bank, for chaining.
    """
    embeddings = torch.as_tensor(embeddings).detach()
    if embeddings.dim() == 1:
        embeddings = embeddings[None]
    if embeddings.shape[1] != bank.dim:
        raise ValidationError(f"embedding dimension {embeddings.shape[1]} does not match bank dimension {bank.dim}")
    norms = embeddings.double().norm(dim=-1)
    if not torch.all((norms - 1.0).abs() <= UNIT_TOLERANCE):
        raise ValidationError("only unit-norm embeddings can be pushed to the memory bank")
    for row in embeddings.to(bank.entries.dtype):
        bank.entries[bank.cursor] = row
        bank.cursor = (bank.cursor + 1) % bank.capacity
    return bank
