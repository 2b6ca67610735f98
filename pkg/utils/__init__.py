"""Utilities module for the visuo-tactile toolkit."""

from .checkpoint import CheckpointArchive, load_archive, load_module, module_tensors, save_archive
from .errors import (
    CheckpointError,
    ConfigurationError,
    LoadError,
    MissingArgumentError,
    NumericError,
    ToolkitError,
    UnknownCommandError,
    ValidationError,
)
from .logging_config import RunLogger, get_available_runs, setup_logging
from .rng import RngStreams, configure_determinism, seeded_init

__all__ = [
    "CheckpointArchive",
    "load_archive",
    "load_module",
    "module_tensors",
    "save_archive",
    "ToolkitError",
    "ValidationError",
    "LoadError",
    "ConfigurationError",
    "NumericError",
    "CheckpointError",
    "MissingArgumentError",
    "UnknownCommandError",
    "RunLogger",
    "setup_logging",
    "get_available_runs",
    "RngStreams",
    "configure_determinism",
    "seeded_init",
]
