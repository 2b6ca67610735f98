"""Versioned metric report and per-pair table written by ``evaluate``."""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from cvtp.trainer import CvtpModel
from data.types import Clip, TactileClip
from utils.errors import ValidationError

from .cvtp_score import pair_cosines
from .frechet import CVTP_EXTRACTOR_ID, clip_features, frechet_distance
from .image_quality import psnr, ssim
from .material import MaterialClassifier

logger = logging.getLogger("vt.metrics")

REPORT_VERSION = 1
REPORT_FILE = "metrics.json"
PAIRS_FILE = "metrics_pairs.csv"


class MetricReport(BaseModel):
    """Scalar metrics plus everything needed to compare them across runs."""

    version: int = REPORT_VERSION
    values: Dict[str, Optional[float]] = Field(default_factory=dict)
    counts: Dict[str, int] = Field(default_factory=dict)
    extractor_id: Optional[str] = None
    classifier_id: Optional[str] = None
    config_hash: Optional[str] = None
    bundle_fingerprint: Optional[str] = None


def evaluate_pairs(
    generated: Sequence[np.ndarray],
    reference: Sequence[np.ndarray],
    partners: Sequence[Clip],
    cvtp_model: CvtpModel,
    classifier: MaterialClassifier,
    target_modality: str = "visual",
    labels: Optional[Sequence[int]] = None,
    config_hash: Optional[str] = None,
    bundle_fingerprint: Optional[str] = None,
) -> Tuple[MetricReport, pd.DataFrame]:
    """Compute all five metrics over aligned generated/reference/partner lists.

    ``partners`` are the conditioning clips: tactile clips when images were
    generated, visual clips when touches were. The cosine score always pairs
    a visual frame with a tactile frame, and Fréchet features come from the
    CVTP encoder of the generated modality.

    Returns:
        ``(MetricReport, DataFrame)``: the report and one table row per pair.
    """
    count = len(generated)
    if count == 0 or len(reference) != count or len(partners) != count:
        raise ValidationError(
            f"need equal non-empty lists, got {count} generated, {len(reference)} references, {len(partners)} partners"
        )
    ssim_values = [ssim(g, r) for g, r in zip(generated, reference)]
    psnr_values = [psnr(g, r) for g, r in zip(generated, reference)]
    window = cvtp_model.encoder_config.window
    if target_modality == "visual":
        cosines = pair_cosines(generated, partners, cvtp_model)
        encoder, extractor_id = cvtp_model.visual_encoder, CVTP_EXTRACTOR_ID
    else:
        touches = [TactileClip.replicate(np.asarray(g, dtype=np.float32), window) for g in generated]
        cosines = pair_cosines([p.center for p in partners], touches, cvtp_model)
        encoder, extractor_id = cvtp_model.tactile_encoder, "cvtp-tactile-penultimate"
    generated_class = np.asarray(classifier.predict(generated))
    reference_class = np.asarray(classifier.predict(reference))

    real = clip_features(reference, encoder, extractor_id)
    fake = clip_features(generated, encoder, extractor_id)
    fid = frechet_distance(real, fake) if count >= 2 else None
    if fid is None:
        logger.warning("Fréchet distance needs at least two pairs; leaving it empty")

    report = MetricReport(
        values={
            "ssim": float(np.mean(ssim_values)),
            "psnr": float(np.mean(psnr_values)),
            "frechet_distance": fid,
            "cvtp_score": float(np.clip(cosines.mean(), -1.0, 1.0)),
            "material_consistency": float(np.mean(generated_class == reference_class)),
        },
        counts={"pairs": count, "feature_dim": real.dim},
        extractor_id=real.extractor_id,
        classifier_id=classifier.classifier_id,
        config_hash=config_hash,
        bundle_fingerprint=bundle_fingerprint,
    )

    table: Dict[str, List] = {
        "pair": list(range(count)),
        "ssim": ssim_values,
        "psnr": psnr_values,
        "cvtp_cosine": cosines.tolist(),
        "generated_class": generated_class.tolist(),
        "reference_class": reference_class.tolist(),
    }
    if labels is not None:
        table["label"] = list(labels)
    return report, pd.DataFrame(table)


def write_report(directory: Union[str, Path], report: MetricReport, pairs: Optional[pd.DataFrame] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / REPORT_FILE
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(report.model_dump(), sort_keys=True, indent=2) + "\n")
    if pairs is not None:
        pairs.to_csv(directory / PAIRS_FILE, index=False, float_format="%.8g", lineterminator="\n")
    logger.info(f"Wrote metric report to {path}")
    return path


def read_report(path: Union[str, Path]) -> MetricReport:
    with open(path, "r", encoding="utf-8") as f:
        return MetricReport.model_validate(json.load(f))
