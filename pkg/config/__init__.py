"""Configuration module for the visuo-tactile toolkit."""

from .run_config import (
    COMMANDS,
    DEFAULT_RUN_CONFIG,
    CvtpConfig,
    DataConfig,
    DiffusionConfig,
    RunConfig,
    SamplingConfig,
    config_hash,
    deep_merge,
    get_default_config,
    read_config_file,
    resolve_config,
    validate_run_config,
)

__all__ = [
    "COMMANDS",
    "DEFAULT_RUN_CONFIG",
    "DataConfig",
    "CvtpConfig",
    "DiffusionConfig",
    "SamplingConfig",
    "RunConfig",
    "deep_merge",
    "get_default_config",
    "read_config_file",
    "resolve_config",
    "validate_run_config",
    "config_hash",
]
