"""Cosine agreement between generated images and the touches they were conditioned on."""

from typing import Sequence

import numpy as np

from cvtp.encoders import encode_tactile_clip, encode_visual_clip
from cvtp.trainer import CvtpModel
from data.types import TactileClip, VisualClip
from utils.errors import ValidationError


def pair_cosines(images: Sequence[np.ndarray], touches: Sequence[TactileClip], model: CvtpModel) -> np.ndarray:
    """Per-pair cosine of visual and tactile embeddings.

    Both sides embed a single frame (the image, the touch's contact frame)
    replicated to fill the fusion window.
    """
    if len(images) != len(touches):
        raise ValidationError(f"{len(images)} images but {len(touches)} touches")
    if len(images) == 0:
        raise ValidationError("no pairs to score")
    window = model.encoder_config.window
    visual = encode_visual_clip(
        [VisualClip.replicate(np.asarray(image, dtype=np.float32), window) for image in images],
        model.visual_encoder,
    )
    tactile = encode_tactile_clip([TactileClip.replicate(touch.center, window) for touch in touches], model.tactile_encoder)
    visual = visual / np.linalg.norm(visual, axis=1, keepdims=True)
    tactile = tactile / np.linalg.norm(tactile, axis=1, keepdims=True)
    return np.sum(visual.astype(np.float64) * tactile.astype(np.float64), axis=1)


def cvtp_score(images: Sequence[np.ndarray], touches: Sequence[TactileClip], model: CvtpModel) -> float:
    """Mean cosine similarity over pairs, in [-1, 1]."""
    return float(np.clip(pair_cosines(images, touches, model).mean(), -1.0, 1.0))
