"""Cross-modal top-1 retrieval over unit embeddings."""

import logging
from typing import Dict

import faiss
import numpy as np

from utils.errors import ValidationError

logger = logging.getLogger("vt.cvtp")


def _top1(queries: np.ndarray, database: np.ndarray) -> np.ndarray:
    index = faiss.IndexFlatIP(database.shape[1])
    index.add(np.ascontiguousarray(database, dtype=np.float32))
    _, neighbours = index.search(np.ascontiguousarray(queries, dtype=np.float32), 1)
    return neighbours[:, 0]


def retrieval_accuracy(visual: np.ndarray, tactile: np.ndarray) -> Dict[str, float]:
    """Fraction of items whose cosine nearest neighbour in the other modality is their own pair.

    Args:
        visual: n×d unit visual embeddings.
        tactile: n×d unit tactile embeddings, row i paired with visual row i.

    Returns:
        ``{"visual_to_tactile": ..., "tactile_to_visual": ...}``
    """
    visual = np.asarray(visual)
    tactile = np.asarray(tactile)
    if visual.shape != tactile.shape or visual.ndim != 2:
        raise ValidationError(f"embedding sets must be equal n×d matrices, got {visual.shape} and {tactile.shape}")
    targets = np.arange(visual.shape[0])
    result = {
        "visual_to_tactile": float(np.mean(_top1(visual, tactile) == targets)),
        "tactile_to_visual": float(np.mean(_top1(tactile, visual) == targets)),
    }
    logger.info(
        f"Top-1 retrieval over {visual.shape[0]} pairs: "
        f"visual->tactile {result['visual_to_tactile']:.3f}, tactile->visual {result['tactile_to_visual']:.3f}"
    )
    return result
