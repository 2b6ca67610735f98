"""Joint training of the denoiser and its condition encoder for one task."""

import logging
from typing import Dict, List, Optional

import numpy as np
import torch
from pydantic import BaseModel, Field
from tqdm import tqdm

from codec.codec import Codec, CodecSpec, LATENT_CHANNELS
from cvtp.encoders import EncoderConfig
from cvtp.trainer import CvtpModel
from data.dataset import PairDataset, stack_items
from data.masks import downsample_mask_batch
from diffusion.losses import eps_loss
from diffusion.sampling import GuidanceConfig
from diffusion.schedule import NoiseSchedule
from diffusion.unet import DenoiserConfig, build_denoiser
from utils.errors import NumericError, ValidationError
from utils.logging_config import RunLogger
from utils.rng import RngStreams, seeded_init

from .bundle import ModelBundle
from .conditioning import build_conditioner
from .spec import TaskSpec

logger = logging.getLogger("vt.tasks")


class TaskTrainConfig(BaseModel):
    """Optimisation hyperparameters of diffusion training."""

    epochs: int = Field(30, ge=1)
    batch_size: int = Field(48, ge=1)
    lr: float = Field(2e-6, gt=0.0)
    log_every: int = Field(10, ge=1)
    sample_steps: int = Field(200, ge=1)


def preflight(spec: TaskSpec, dataset: PairDataset) -> None:
    """Fail before training when the dataset lacks a field the task needs."""
    for name in spec.required_fields():
        missing = dataset.missing_entries(name)
        if missing:
            shown = ", ".join(missing[:5])
            raise ValidationError(
                f"task needs '{name}' for every entry; {len(missing)} entries lack it (e.g. {shown})"
            )


def _target_key(spec: TaskSpec) -> str:
    return f"{spec.target_modality}_center"


def _latent_batch(codec: Codec, batch: Dict[str, torch.Tensor], spec: TaskSpec, latent_hw) -> Dict[str, torch.Tensor]:
    result = {"z0": codec.encode(batch[_target_key(spec)])}
    if spec.concat_source != "none":
        result["concat"] = codec.encode(batch[spec.concat_source])
    if spec.hand_free:
        result["mask"] = downsample_mask_batch(batch["mask"], *latent_hw)
    return result


def _condition_batch(batch: Dict[str, torch.Tensor], spec: TaskSpec) -> Dict[str, torch.Tensor]:
    modality = spec.condition_modality
    return {key: batch[key] for key in (modality, f"{modality}_center", "label")}


def masked_gradient_max(prediction: torch.Tensor, mask: torch.Tensor) -> float:
    """Largest |∂loss/∂ε̂| over masked cells; must be exactly 0."""
    if prediction.grad is None:
        raise NumericError("masked gradient check found no gradient on the denoiser output")
    masked = (mask.expand_as(prediction.grad) == 0)
    return float(prediction.grad[masked].abs().max()) if masked.any() else 0.0


def train_task(
    spec: TaskSpec,
    dataset: PairDataset,
    train_config: TaskTrainConfig,
    denoiser_config: DenoiserConfig,
    codec_spec: CodecSpec,
    encoder_config: EncoderConfig,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    streams: RngStreams,
    num_classes: int,
    cvtp_model: Optional[CvtpModel] = None,
    run_logger: Optional[RunLogger] = None,
    progress: bool = False,
) -> ModelBundle:
    """Train ε_θ and the condition encoder jointly with Adam and return a bundle.

    Every step draws t, ε and the condition-drop mask from the ``noise``
    stream of that step. For hand-free specs the first batch of every epoch
    is checked: the gradient of the loss with respect to the denoiser output
    must vanish on masked latent cells.
    """
    preflight(spec, dataset)
    if encoder_config.window != dataset.window and spec.condition_source == "clip":
        raise ValidationError(f"dataset clips have {dataset.window} frames, encoder expects {encoder_config.window}")

    codec = Codec(codec_spec)
    height, width = dataset.frame_shape
    latent_hw = codec_spec.latent_shape(height, width)
    denoiser_config = denoiser_config.model_copy(update={
        "in_channels": LATENT_CHANNELS,
        "out_channels": LATENT_CHANNELS,
        "concat_channels": LATENT_CHANNELS if spec.concat_source != "none" else 0,
        "context_dim": encoder_config.embed_dim,
    })

    with seeded_init(streams, 2):
        denoiser = build_denoiser(denoiser_config)
    with seeded_init(streams, 3):
        conditioner = build_conditioner(spec, encoder_config, num_classes, cvtp_model)
    parameters = list(denoiser.parameters()) + list(conditioner.parameters())
    optimizer = torch.optim.Adam(parameters, lr=train_config.lr)

    denoiser.train()
    conditioner.train()
    losses: List[float] = []
    step = 0
    task_logger = logging.getLogger(f"vt.tasks.{spec.direction}")
    bar = tqdm(range(train_config.epochs), desc=spec.direction, unit="epoch", disable=not progress)
    for epoch in bar:
        order = streams.numpy("shuffle", epoch).permutation(len(dataset))
        epoch_losses = []
        for offset in range(0, len(dataset), train_config.batch_size):
            batch = stack_items(dataset, order[offset:offset + train_config.batch_size])
            latents = _latent_batch(codec, batch, spec, latent_hw)
            cond = conditioner(_condition_batch(batch, spec))
            check_mask = spec.hand_free and offset == 0

            loss, prediction = eps_loss(
                denoiser,
                latents["z0"],
                cond,
                schedule,
                generator=streams.torch_generator("noise", step),
                mask=latents.get("mask"),
                concat=latents.get("concat"),
                drop_prob=guidance.drop_prob,
                return_prediction=True,
            )
            if not torch.isfinite(loss):
                raise NumericError(f"diffusion loss became non-finite at step {step}")
            if check_mask:
                prediction.retain_grad()

            optimizer.zero_grad()
            loss.backward()

            if check_mask:
                masked_max = masked_gradient_max(prediction, latents["mask"])
                task_logger.debug(f"masked gradient epoch {epoch}: masked max |grad| = {masked_max}")
                if run_logger:
                    run_logger.log_event("masked_gradient", {"epoch": epoch, "step": step, "masked_max": masked_max})
                if masked_max != 0.0:
                    raise NumericError(f"masked latent cells received gradient {masked_max} at epoch {epoch}")

            optimizer.step()

            value = float(loss.item())
            losses.append(value)
            epoch_losses.append(value)
            if run_logger and step % train_config.log_every == 0:
                run_logger.log_train_step(f"vt.tasks.{spec.direction}", step, value, lr=train_config.lr)
            step += 1

        mean_loss = float(np.mean(epoch_losses))
        bar.set_postfix(loss=f"{mean_loss:.4f}")
        if run_logger:
            run_logger.log_event("epoch_end", {"component": f"vt.tasks.{spec.direction}", "epoch": epoch, "mean_loss": mean_loss})

    task_logger.info(f"Trained {spec.direction} for {step} steps: loss {losses[0]:.4f} -> {losses[-1]:.4f}")

    first = stack_items(dataset, [0])
    fingerprint_inputs = _condition_batch(first, spec)
    if spec.concat_source != "none":
        fingerprint_inputs["concat"] = codec.encode(first[spec.concat_source])

    bundle = ModelBundle(
        task_spec=spec,
        codec_spec=codec_spec,
        denoiser_config=denoiser_config,
        encoder_config=encoder_config,
        schedule=schedule,
        guidance=guidance,
        num_classes=num_classes,
        latent_shape=(LATENT_CHANNELS, *latent_hw),
        image_shape=(height, width),
        denoiser=denoiser,
        conditioner=conditioner,
        sample_steps=train_config.sample_steps,
        fingerprint_inputs=fingerprint_inputs,
        metadata={"step": step, "losses": losses, "seed": streams.seed, "pretrained_condition": cvtp_model is not None},
    ).eval()
    bundle.fingerprint = bundle.compute_fingerprint()
    return bundle
