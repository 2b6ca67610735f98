"""Evaluation metrics: image quality, Fréchet distance, CVTP score and material consistency."""

from .cvtp_score import cvtp_score, pair_cosines
from .frechet import CVTP_EXTRACTOR_ID, FeatureSet, clip_features, frechet_distance, frechet_from_moments
from .image_quality import PSNR_CAP, psnr, ssim
from .material import ORACLE_ID, RoughnessOracle, material_consistency, texture_statistic
from .report import MetricReport, evaluate_pairs, read_report, write_report

__all__ = [
    "ssim",
    "psnr",
    "PSNR_CAP",
    "FeatureSet",
    "frechet_distance",
    "frechet_from_moments",
    "clip_features",
    "CVTP_EXTRACTOR_ID",
    "cvtp_score",
    "pair_cosines",
    "RoughnessOracle",
    "material_consistency",
    "texture_statistic",
    "ORACLE_ID",
    "MetricReport",
    "evaluate_pairs",
    "write_report",
    "read_report",
]
