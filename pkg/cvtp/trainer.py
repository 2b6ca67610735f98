"""Contrastive visuo-tactile pretraining loop and its checkpoint."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch
from pydantic import BaseModel, Field
from tqdm import tqdm

from data.dataset import PairDataset, stack_items
from utils.checkpoint import load_archive, load_module, module_tensors, save_archive
from utils.errors import CheckpointError, NumericError, ValidationError
from utils.logging_config import RunLogger
from utils.rng import RngStreams, seeded_init

from .encoders import ClipEncoder, EncoderConfig
from .losses import cvtp_loss
from .memory_bank import MemoryBank, bank_push

logger = logging.getLogger("vt.cvtp")

CHECKPOINT_KIND = "cvtp"


class CvtpTrainConfig(BaseModel):
    """Optimisation hyperparameters of contrastive pretraining."""

    epochs: int = Field(30, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(0.1, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    bank_size: int = Field(16385, ge=1)
    log_every: int = Field(10, ge=1)


@dataclass
class CvtpModel:
    """Trained visual and tactile encoders with their memory banks."""

    encoder_config: EncoderConfig
    visual_encoder: ClipEncoder
    tactile_encoder: ClipEncoder
    visual_bank: MemoryBank
    tactile_bank: MemoryBank
    step: int = 0
    losses: List[float] = field(default_factory=list)
    train_config: Optional[CvtpTrainConfig] = None

    def eval(self) -> "CvtpModel":
        self.visual_encoder.eval()
        self.tactile_encoder.eval()
        return self


def build_cvtp_model(
    encoder_config: EncoderConfig,
    bank_size: int,
    streams: RngStreams,
    dtype: torch.dtype = torch.float32,
) -> CvtpModel:
    """Freshly initialised encoders (from the ``init`` stream) and random-filled banks."""
    with seeded_init(streams, 0):
        visual_encoder = ClipEncoder(encoder_config).to(dtype)
    with seeded_init(streams, 1):
        tactile_encoder = ClipEncoder(encoder_config).to(dtype)
    return CvtpModel(
        encoder_config=encoder_config,
        visual_encoder=visual_encoder,
        tactile_encoder=tactile_encoder,
        visual_bank=MemoryBank(bank_size, encoder_config.embed_dim, streams, 0, dtype),
        tactile_bank=MemoryBank(bank_size, encoder_config.embed_dim, streams, 1, dtype),
    )


def _batches(size: int, batch_size: int, streams: RngStreams, epoch: int) -> List[np.ndarray]:
    order = streams.numpy("shuffle", epoch).permutation(size)
    return [order[i:i + batch_size] for i in range(0, size, batch_size)]


def train_cvtp(
    dataset: PairDataset,
    encoder_config: EncoderConfig,
    train_config: CvtpTrainConfig,
    streams: RngStreams,
    run_logger: Optional[RunLogger] = None,
    progress: bool = False,
) -> CvtpModel:
    """Train both clip encoders with the symmetric memory-bank InfoNCE objective.

    SGD with momentum and weight decay; the learning rate follows a cosine
    decay over all steps. After every step the detached embeddings of the
    batch are pushed to their banks.
    """
    if dataset.window != encoder_config.window:
        raise ValidationError(f"dataset clips have {dataset.window} frames, encoder expects {encoder_config.window}")
    if train_config.batch_size > train_config.bank_size:
        raise ValidationError("batch size cannot exceed the memory bank size")

    model = build_cvtp_model(encoder_config, train_config.bank_size, streams)
    model.train_config = train_config
    parameters = list(model.visual_encoder.parameters()) + list(model.tactile_encoder.parameters())
    optimizer = torch.optim.SGD(
        parameters, lr=train_config.lr, momentum=train_config.momentum, weight_decay=train_config.weight_decay
    )
    steps_per_epoch = -(-len(dataset) // train_config.batch_size)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=train_config.epochs * steps_per_epoch)

    model.visual_encoder.train()
    model.tactile_encoder.train()
    epochs = range(train_config.epochs)
    bar = tqdm(epochs, desc="cvtp", unit="epoch", disable=not progress)
    for epoch in bar:
        epoch_losses = []
        for indices in _batches(len(dataset), train_config.batch_size, streams, epoch):
            batch = stack_items(dataset, indices)
            visual = model.visual_encoder(batch["visual"])
            tactile = model.tactile_encoder(batch["tactile"])
            loss = cvtp_loss(visual, tactile, model.visual_bank, model.tactile_bank, encoder_config.temperature)
            if not torch.isfinite(loss):
                raise NumericError(f"CVTP loss became non-finite at step {model.step}")

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()

            bank_push(model.visual_bank, visual.detach())
            bank_push(model.tactile_bank, tactile.detach())

            value = float(loss.item())
            model.losses.append(value)
            epoch_losses.append(value)
            if run_logger and model.step % train_config.log_every == 0:
                run_logger.log_train_step("vt.cvtp", model.step, value, lr=scheduler.get_last_lr()[0])
            model.step += 1

        mean_loss = float(np.mean(epoch_losses))
        bar.set_postfix(loss=f"{mean_loss:.4f}")
        logger.debug(f"epoch {epoch}: mean loss {mean_loss:.6f}")
        if run_logger:
            run_logger.log_event("epoch_end", {"component": "vt.cvtp", "epoch": epoch, "mean_loss": mean_loss})

    logger.info(f"CVTP training finished after {model.step} steps, final loss {model.losses[-1]:.4f}")
    return model.eval()


def save_cvtp(path: Union[str, Path], model: CvtpModel, extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write encoders, encoder config and bank state to one archive."""
    tensors = {}
    tensors.update(module_tensors(model.visual_encoder, "visual."))
    tensors.update(module_tensors(model.tactile_encoder, "tactile."))
    for name, bank in (("visual", model.visual_bank), ("tactile", model.tactile_bank)):
        state = bank.state()
        tensors[f"bank.{name}.entries"] = state["entries"]
        tensors[f"bank.{name}.cursor"] = state["cursor"]
    metadata = {
        "kind": CHECKPOINT_KIND,
        "configs": {
            "encoder": model.encoder_config.model_dump(),
            "train": model.train_config.model_dump() if model.train_config else None,
        },
        "step": model.step,
        "losses": model.losses,
    }
    metadata.update(extra or {})
    return save_archive(path, tensors, metadata)


def load_cvtp(path: Union[str, Path]) -> CvtpModel:
    """Rebuild a :class:`CvtpModel` from :func:`save_cvtp` output, in evaluation mode."""
    archive = load_archive(path)
    if archive.metadata.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a CVTP checkpoint (kind={archive.metadata.get('kind')})")
    encoder_config = EncoderConfig.model_validate(archive.metadata["configs"]["encoder"])
    train = archive.metadata["configs"].get("train")

    visual_encoder = ClipEncoder(encoder_config)
    tactile_encoder = ClipEncoder(encoder_config)
    load_module(visual_encoder, archive, "visual.")
    load_module(tactile_encoder, archive, "tactile.")

    banks = {}
    for name in ("visual", "tactile"):
        entries = archive.tensors.get(f"bank.{name}.entries")
        cursor = archive.tensors.get(f"bank.{name}.cursor")
        if entries is None or cursor is None:
            raise CheckpointError(f"{path} has no {name} memory bank")
        bank = MemoryBank(entries.shape[0], entries.shape[1])
        bank.load_state(torch.from_numpy(entries), int(cursor[0]))
        banks[name] = bank

    return CvtpModel(
        encoder_config=encoder_config,
        visual_encoder=visual_encoder,
        tactile_encoder=tactile_encoder,
        visual_bank=banks["visual"],
        tactile_bank=banks["tactile"],
        step=int(archive.metadata.get("step", 0)),
        losses=list(archive.metadata.get("losses", [])),
        train_config=CvtpTrainConfig.model_validate(train) if train else None,
    ).eval()
