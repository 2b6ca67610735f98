"""Run configuration: schema, environment defaults, per-command validation and hashing."""

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as SchemaError

from codec.codec import CodecSpec
from cvtp.encoders import EncoderConfig
from cvtp.trainer import CvtpTrainConfig
from diffusion.sampling import GuidanceConfig
from diffusion.schedule import BETA_END, BETA_START, NoiseSchedule, make_schedule
from diffusion.unet import DenoiserConfig
from tasks.spec import TaskSpec
from tasks.trainer import TaskTrainConfig
from utils.errors import MissingArgumentError, UnknownCommandError, ValidationError

COMMANDS = ("synth-data", "train-cvtp", "train-diffusion", "sample", "stylize", "shade", "evaluate")

# Fields that do not change what a command computes
UNHASHED_FIELDS = ("output_dir", "log_dir", "debug", "threads", "quiet", "overwrite")


class DataConfig(BaseModel):
    """Synthetic data generation and dataset loading."""

    pairs: int = Field(64, ge=1)
    num_classes: int = Field(3, ge=1)
    image_size: int = Field(64, ge=8)
    frames_per_touch: Optional[int] = Field(None, ge=1, description="w + 2 when unset")
    occluder: bool = False
    albedo: Optional[Tuple[float, float, float]] = None
    limit: Optional[int] = Field(None, ge=1, description="Use only the first entries of a dataset")


class CvtpConfig(BaseModel):
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    train: CvtpTrainConfig = Field(default_factory=CvtpTrainConfig)


class DiffusionConfig(BaseModel):
    timesteps: int = Field(1000, ge=1)
    schedule: Literal["linear"] = "linear"
    beta_start: float = Field(BETA_START, gt=0.0, lt=1.0)
    beta_end: float = Field(BETA_END, gt=0.0, lt=1.0)
    drop_prob: float = Field(0.1, ge=0.0, lt=1.0)
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    train: TaskTrainConfig = Field(default_factory=TaskTrainConfig)

    def make_schedule(self) -> NoiseSchedule:
        return make_schedule(self.timesteps, self.schedule, self.beta_start, self.beta_end)


class SamplingConfig(BaseModel):
    """Inference overrides; unset fields fall back to the bundle's stored defaults."""

    steps: Optional[int] = Field(None, ge=1)
    guidance_scale: Optional[float] = Field(None, ge=0.0)
    level: Optional[int] = Field(None, ge=0, description="Stylization level N")
    touch_offset: int = Field(1, ge=0, description="Stylize entry i with the touch of entry i + offset")


class RunConfig(BaseModel):
    """Fully resolved configuration of one CLI invocation."""

    model_config = ConfigDict(extra="forbid")

    command: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=1)
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    cvtp_checkpoint: Optional[str] = None
    samples: Optional[str] = None
    output_dir: Optional[str] = None
    log_dir: str = "logs"
    debug: bool = False
    quiet: bool = False
    overwrite: bool = False

    data: DataConfig = Field(default_factory=DataConfig)
    codec: CodecSpec = Field(default_factory=CodecSpec)
    cvtp: CvtpConfig = Field(default_factory=CvtpConfig)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    task: TaskSpec = Field(default_factory=TaskSpec)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)

    def guidance(self) -> GuidanceConfig:
        return GuidanceConfig(scale=self.task.guidance_scale, drop_prob=self.diffusion.drop_prob)


DEFAULT_RUN_CONFIG: Dict[str, Any] = RunConfig().model_dump()


def get_default_config() -> Dict[str, Any]:
    """Defaults with ``VT_*`` environment overrides (a ``.env`` file is read first).

    Returns:
        Nested configuration dictionary
    """
    load_dotenv()
    config = copy.deepcopy(DEFAULT_RUN_CONFIG)
    config["seed"] = int(os.getenv("VT_SEED", config["seed"]))
    config["threads"] = int(os.getenv("VT_THREADS", config["threads"]))
    config["log_dir"] = os.getenv("VT_LOG_DIR", config["log_dir"])
    config["diffusion"]["timesteps"] = int(os.getenv("VT_TIMESTEPS", config["diffusion"]["timesteps"]))
    config["diffusion"]["train"]["sample_steps"] = int(
        os.getenv("VT_SAMPLE_STEPS", config["diffusion"]["train"]["sample_steps"])
    )
    config["diffusion"]["train"]["batch_size"] = int(
        os.getenv("VT_BATCH_SIZE", config["diffusion"]["train"]["batch_size"])
    )
    config["task"]["guidance_scale"] = float(os.getenv("VT_GUIDANCE_SCALE", config["task"]["guidance_scale"]))
    if os.getenv("VT_BACKBONE"):
        config["cvtp"]["encoder"]["backbone"] = os.getenv("VT_BACKBONE")
    return config


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``; ``None`` overrides are ignored."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise MissingArgumentError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ValidationError(f"config file {path} must hold a nested map")
    return payload


def resolve_config(
    defaults: Dict[str, Any],
    file_config: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Defaults < config file < command-line flags."""
    merged = deep_merge(defaults, file_config or {})
    merged = deep_merge(merged, overrides or {})
    try:
        return RunConfig.model_validate(merged)
    except SchemaError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ValidationError(f"invalid config at '{location}': {first['msg']}") from e


# Command-line spelling of fields whose flag differs from the field name
_FLAGS = {"output_dir": "out", "cvtp_checkpoint": "cvtp"}

_REQUIRED: Dict[str, List[str]] = {
    "synth-data": ["output_dir"],
    "train-cvtp": ["dataset", "output_dir"],
    "train-diffusion": ["dataset", "output_dir"],
    "sample": ["checkpoint", "dataset", "output_dir"],
    "stylize": ["checkpoint", "dataset", "output_dir"],
    "shade": ["checkpoint", "dataset", "output_dir"],
    "evaluate": ["samples", "dataset", "cvtp_checkpoint", "output_dir"],
}


def validate_run_config(config: RunConfig, command: str) -> RunConfig:
    """Check the inputs and cross-field ranges the selected command needs.

    Raises:
        UnknownCommandError: command is not a toolkit subcommand
        MissingArgumentError: a required input is unset
        ValidationError: a value is out of range
    """
    if command not in COMMANDS:
        raise UnknownCommandError(f"unknown command '{command}'; expected one of {', '.join(COMMANDS)}")
    for name in _REQUIRED[command]:
        if getattr(config, name) in (None, ""):
            raise MissingArgumentError(f"{command} requires --{_FLAGS.get(name, name)}")

    timesteps = config.diffusion.timesteps
    if config.diffusion.beta_start > config.diffusion.beta_end:
        raise ValidationError("diffusion.beta_start must not exceed diffusion.beta_end")
    if config.sampling.steps is not None and config.sampling.steps > timesteps:
        raise ValidationError(f"sampling steps {config.sampling.steps} exceed T={timesteps}")
    if config.diffusion.train.sample_steps > timesteps:
        raise ValidationError(f"default sampling steps {config.diffusion.train.sample_steps} exceed T={timesteps}")
    for level in (config.sampling.level, config.task.sdedit_level):
        if level is not None and level > timesteps:
            raise ValidationError(f"stylization level N={level} outside [0, {timesteps}]")
    frames = config.data.frames_per_touch
    if frames is not None and frames < config.cvtp.encoder.window:
        raise ValidationError(f"{frames} frames per touch cannot fill a {config.cvtp.encoder.window}-frame window")
    return config.model_copy(update={"command": command})


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON of every field that affects results."""
    payload = config.model_dump(exclude=set(UNHASHED_FIELDS))
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
