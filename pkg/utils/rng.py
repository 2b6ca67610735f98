"""Deterministic random streams.

All randomness flows through :class:`RngStreams`. A stream is addressed by
``(seed, purpose, step)`` and backed by numpy's counter-based Philox bit
generator, so drawing from one purpose never shifts the draws of another.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import torch

PURPOSES = (
    "synth",
    "init",
    "shuffle",
    "timestep",
    "noise",
    "drop",
    "sample",
    "sdedit",
    "bank",
    "fingerprint",
)


def _purpose_key(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RngStreams:
    """A family of deterministic streams derived from one 64-bit seed."""

    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")

    def numpy(self, purpose: str, step: int = 0) -> np.random.Generator:
        """Philox generator for ``(purpose, step)``.

        Args:
            purpose: Stream name, e.g. ``"noise"``.
            step: Global step or item index.

        Returns:
            A fresh numpy Generator; equal arguments give equal draws.
        """
        if purpose not in PURPOSES:
            raise ValueError(f"unknown rng purpose: {purpose}")
        seq = np.random.SeedSequence([int(self.seed), _purpose_key(purpose), int(step)])
        return np.random.Generator(np.random.Philox(seq))

    def seed_for(self, purpose: str, step: int = 0) -> int:
        """Derive a 63-bit integer seed for APIs that only accept integers."""
        return int(self.numpy(purpose, step).integers(0, 2**63 - 1))

    def torch_generator(self, purpose: str, step: int = 0) -> torch.Generator:
        """CPU ``torch.Generator`` seeded from the ``(purpose, step)`` stream."""
        generator = torch.Generator(device="cpu")
        generator.manual_seed(self.seed_for(purpose, step))
        return generator


def configure_determinism(threads: int = 1) -> None:
    """Pin torch to a reproducible execution mode.

    Args:
        threads: Intra-op thread count; ``1`` is the fully serial mode.
    """
    torch.set_num_threads(max(1, int(threads)))
    torch.use_deterministic_algorithms(True, warn_only=True)
    torch.backends.cudnn.benchmark = False


@contextmanager
def seeded_init(streams: RngStreams, step: int = 0) -> Iterator[None]:
    """Build modules with weights drawn from the ``init`` stream.

    The global torch RNG is forked, so code outside the block is unaffected.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(streams.seed_for("init", step))
        yield
