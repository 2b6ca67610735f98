"""Shared fixtures: tiny model configs and a small synthetic dataset."""

import sys
from pathlib import Path

import pytest

sys.path.append(str(Path(__file__).parent.parent))

from codec import CodecSpec
from cvtp.encoders import EncoderConfig
from data import PairDataset, synthesize_dataset, write_dataset
from data.manifest import entry_name, pair_to_sample
from diffusion.sampling import GuidanceConfig
from diffusion.schedule import make_schedule
from diffusion.unet import DenoiserConfig
from tasks.spec import TaskSpec
from tasks.trainer import TaskTrainConfig, train_task
from utils.rng import RngStreams

IMAGE_SIZE = 16
WINDOW = 3
EMBED_DIM = 8


def tiny_encoder_config(**overrides) -> EncoderConfig:
    fields = {"backbone": "tiny", "window": WINDOW, "embed_dim": EMBED_DIM, "tiny_width": 4}
    return EncoderConfig(**{**fields, **overrides})


def tiny_denoiser_config(**overrides) -> DenoiserConfig:
    fields = {"kind": "tiny", "base_channels": 8, "context_dim": EMBED_DIM}
    return DenoiserConfig(**{**fields, **overrides})


def train_tiny_bundle(dataset: PairDataset, spec: TaskSpec, seed: int = 0, timesteps: int = 50, epochs: int = 1):
    return train_task(
        spec,
        dataset,
        TaskTrainConfig(epochs=epochs, batch_size=4, lr=1e-3, sample_steps=5),
        tiny_denoiser_config(),
        CodecSpec(),
        tiny_encoder_config(),
        make_schedule(timesteps),
        GuidanceConfig(scale=spec.guidance_scale),
        RngStreams(seed),
        num_classes=3,
    )


@pytest.fixture(scope="session")
def synth_pairs():
    """Six 16-pixel touches of five frames, two per roughness class, with a hand occluder."""
    return synthesize_dataset(6, seed=0, num_classes=3, frames=WINDOW + 2, image_size=IMAGE_SIZE, occluder=True)


@pytest.fixture(scope="session")
def tiny_dataset(synth_pairs):
    return PairDataset(pair_to_sample(pair, WINDOW // 2, entry_name(i)) for i, pair in enumerate(synth_pairs))


@pytest.fixture
def dataset_dir(tmp_path, synth_pairs):
    root = tmp_path / "dataset"
    write_dataset(root, synth_pairs, {"seed": 0})
    return root


@pytest.fixture(scope="session")
def touch_bundle(tiny_dataset):
    return train_tiny_bundle(tiny_dataset, TaskSpec(direction="touch_to_image"))


@pytest.fixture(scope="session")
def reflectance_bundle(tiny_dataset):
    return train_tiny_bundle(tiny_dataset, TaskSpec(direction="touch_to_image", concat_source="reflectance"))


@pytest.fixture
def schedule():
    return make_schedule(50)


def small_unet_config(**overrides) -> DenoiserConfig:
    fields = {
        "kind": "unet",
        "base_channels": 32,
        "channel_mult": [1, 2],
        "attention_resolutions": [2],
        "num_res_blocks": 1,
        "head_channels": 32,
        "context_dim": EMBED_DIM,
        "norm_groups": 8,
    }
    return DenoiserConfig(**{**fields, **overrides})


def train_overfit_bundle(dataset: PairDataset, spec: TaskSpec, num_classes: int, steps: int = 2000, seed: int = 0):
    """A small U-Net trained long enough to memorise a toy dataset."""
    batch_size = 8
    epochs = -(-steps * batch_size // len(dataset))
    return train_task(
        spec,
        dataset,
        TaskTrainConfig(epochs=epochs, batch_size=batch_size, lr=5e-4, log_every=100, sample_steps=50),
        small_unet_config(),
        CodecSpec(),
        tiny_encoder_config(tiny_width=16),
        make_schedule(1000),
        GuidanceConfig(scale=spec.guidance_scale),
        RngStreams(seed),
        num_classes=num_classes,
    )


def toy_dataset(num_pairs: int, num_classes: int, image_size: int = 32, **synth) -> PairDataset:
    pairs = synthesize_dataset(num_pairs, seed=0, num_classes=num_classes, frames=WINDOW + 2,
                               image_size=image_size, **synth)
    return PairDataset(pair_to_sample(pair, WINDOW // 2, entry_name(i)) for i, pair in enumerate(pairs))
