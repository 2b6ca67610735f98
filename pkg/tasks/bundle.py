"""Self-describing model bundles.

A bundle directory holds ``bundle.json`` (task, codec, schedule, architecture
and guidance defaults), ``denoiser.vtck`` (denoiser weights plus the fingerprint
inputs of the fingerprint) and ``condition_encoder.vtck``.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from codec.codec import Codec, CodecSpec
from cvtp.encoders import EncoderConfig
from data.dataset import frame_to_tensor
from diffusion.sampling import GuidanceConfig, sample
from diffusion.schedule import NoiseSchedule, schedule_from_dict
from diffusion.unet import DenoiserConfig, build_denoiser
from utils.checkpoint import CheckpointArchive, load_archive, load_module, module_tensors, save_archive
from utils.errors import CheckpointError
from utils.rng import RngStreams

from .conditioning import Conditioner, build_conditioner
from .spec import TaskSpec

logger = logging.getLogger("vt.tasks")

BUNDLE_VERSION = 1
BUNDLE_FILE = "bundle.json"
DENOISER_FILE = "denoiser.vtck"
CONDITIONER_FILE = "condition_encoder.vtck"
FINGERPRINT_STEPS = 10
FINGERPRINT_SEED = 0


@dataclass
class ModelBundle:
    """Everything needed to sample from a trained task model."""

    task_spec: TaskSpec
    codec_spec: CodecSpec
    denoiser_config: DenoiserConfig
    encoder_config: EncoderConfig
    schedule: NoiseSchedule
    guidance: GuidanceConfig
    num_classes: int
    latent_shape: Tuple[int, int, int]
    image_shape: Tuple[int, int]
    denoiser: nn.Module
    conditioner: Conditioner
    sample_steps: int = 200
    fingerprint_inputs: Dict[str, torch.Tensor] = field(default_factory=dict)
    fingerprint: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @cached_property
    def codec(self) -> Codec:
        return Codec(self.codec_spec)

    def eval(self) -> "ModelBundle":
        self.denoiser.eval()
        self.conditioner.eval()
        return self

    @torch.no_grad()
    def embed(self, batch: Dict[str, torch.Tensor]) -> torch.Tensor:
        """Condition embeddings of a conditioning batch, evaluation mode."""
        self.conditioner.eval()
        return self.conditioner(batch)

    def encode_frame(self, frame: np.ndarray) -> torch.Tensor:
        """(1, 3, h, w) latent of an H×W×3 frame in [-1, 1]."""
        return self.codec.encode(frame_to_tensor(frame)[None])

    def steps_for(self, steps: Optional[int]) -> int:
        return min(steps if steps is not None else self.sample_steps, self.schedule.timesteps)

    def compute_fingerprint(self) -> str:
        """SHA-256 of a short fixed-seed sample drawn from the stored fingerprint inputs."""
        if not self.fingerprint_inputs:
            raise CheckpointError("bundle has no fingerprint inputs to fingerprint")
        self.eval()
        cond_inputs = {k: v for k, v in self.fingerprint_inputs.items() if k != "concat"}
        generator = RngStreams(FINGERPRINT_SEED).torch_generator("fingerprint")
        z = sample(
            self.denoiser,
            self.embed(cond_inputs),
            (1, *self.latent_shape),
            self.schedule,
            self.guidance.model_copy(update={"scale": self.task_spec.guidance_scale}),
            generator=generator,
            steps=min(FINGERPRINT_STEPS, self.schedule.timesteps),
            concat=self.fingerprint_inputs.get("concat"),
        )
        return hashlib.sha256(z.numpy().astype("<f4").tobytes()).hexdigest()

    def verify_fingerprint(self) -> bool:
        return self.fingerprint is not None and self.compute_fingerprint() == self.fingerprint

    def describe(self) -> Dict[str, Any]:
        return {
            "version": BUNDLE_VERSION,
            "task": self.task_spec.model_dump(),
            "codec": self.codec_spec.model_dump(),
            "denoiser": self.denoiser_config.model_dump(),
            "encoder": self.encoder_config.model_dump(),
            "schedule": self.schedule.to_dict(),
            "guidance": self.guidance.model_dump(),
            "num_classes": self.num_classes,
            "latent_shape": list(self.latent_shape),
            "image_shape": list(self.image_shape),
            "sample_steps": self.sample_steps,
            "fingerprint": self.fingerprint,
            "files": {"denoiser": DENOISER_FILE, "condition_encoder": CONDITIONER_FILE},
            "metadata": self.metadata,
        }


def save_bundle(directory: Union[str, Path], bundle: ModelBundle) -> Path:
    """Write the bundle directory; the fingerprint is computed when missing."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if bundle.fingerprint is None:
        bundle.fingerprint = bundle.compute_fingerprint()

    description = bundle.describe()
    denoiser_tensors = module_tensors(bundle.denoiser, "denoiser.")
    denoiser_tensors.update({f"fingerprint.{name}": value for name, value in bundle.fingerprint_inputs.items()})
    save_archive(
        directory / DENOISER_FILE,
        denoiser_tensors,
        {
            "kind": "denoiser",
            "configs": {key: description[key] for key in ("denoiser", "schedule", "codec", "guidance", "task")},
            "step": bundle.metadata.get("step", 0),
        },
    )
    save_archive(
        directory / CONDITIONER_FILE,
        module_tensors(bundle.conditioner, "conditioner."),
        {
            "kind": "condition_encoder",
            "configs": {"encoder": description["encoder"], "task": description["task"], "num_classes": bundle.num_classes},
        },
    )
    with open(directory / BUNDLE_FILE, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(description, sort_keys=True, indent=2, default=float) + "\n")
    logger.info(f"Saved {bundle.task_spec.direction} bundle to {directory}")
    return directory


def _fingerprint_inputs_from(archive: CheckpointArchive) -> Dict[str, torch.Tensor]:
    return {
        name[len("fingerprint."):]: torch.from_numpy(array.copy())
        for name, array in archive.tensors.items()
        if name.startswith("fingerprint.")
    }


def load_bundle(directory: Union[str, Path]) -> ModelBundle:
    """Rebuild a :class:`ModelBundle` written by :func:`save_bundle`, in evaluation mode."""
    directory = Path(directory)
    description_file = directory / BUNDLE_FILE
    if not description_file.is_file():
        raise CheckpointError(f"no model bundle at {directory} ({BUNDLE_FILE} missing)")
    try:
        with open(description_file, "r", encoding="utf-8") as f:
            description = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt {description_file}: {e}") from e
    if description.get("version") != BUNDLE_VERSION:
        raise CheckpointError(f"unsupported bundle version {description.get('version')} in {directory}")

    try:
        task_spec = TaskSpec.model_validate(description["task"])
        denoiser_config = DenoiserConfig.model_validate(description["denoiser"])
        encoder_config = EncoderConfig.model_validate(description["encoder"])
        codec_spec = CodecSpec.model_validate(description["codec"])
        guidance = GuidanceConfig.model_validate(description["guidance"])
        schedule = schedule_from_dict(description["schedule"])
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"invalid bundle description in {directory}: {e}") from e

    denoiser = build_denoiser(denoiser_config)
    denoiser_archive = load_archive(directory / DENOISER_FILE)
    load_module(denoiser, denoiser_archive, "denoiser.")

    num_classes = int(description["num_classes"])
    conditioner = build_conditioner(task_spec, encoder_config, num_classes)
    load_module(conditioner, load_archive(directory / CONDITIONER_FILE), "conditioner.")

    return ModelBundle(
        task_spec=task_spec,
        codec_spec=codec_spec,
        denoiser_config=denoiser_config,
        encoder_config=encoder_config,
        schedule=schedule,
        guidance=guidance,
        num_classes=num_classes,
        latent_shape=tuple(description["latent_shape"]),
        image_shape=tuple(description["image_shape"]),
        denoiser=denoiser,
        conditioner=conditioner,
        sample_steps=int(description.get("sample_steps", 200)),
        fingerprint_inputs=_fingerprint_inputs_from(denoiser_archive),
        fingerprint=description.get("fingerprint"),
        metadata=description.get("metadata", {}),
    ).eval()
