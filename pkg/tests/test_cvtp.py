"""Test contrastive visuo-tactile pretraining: bank, InfoNCE, encoders, retrieval and training."""

import math
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from conftest import WINDOW, tiny_encoder_config
from cvtp import (
    ClipEncoder,
    CvtpTrainConfig,
    MemoryBank,
    bank_push,
    build_cvtp_model,
    cvtp_loss,
    encode_tactile_clip,
    encode_visual_clip,
    infonce_loss,
    load_cvtp,
    retrieval_accuracy,
    save_cvtp,
    train_cvtp,
)
from cvtp.encoders import EncoderConfig
from data import PairDataset, SynthParams, synth_pair
from data.manifest import entry_name, pair_to_sample
from utils.errors import CheckpointError, ValidationError
from utils.rng import RngStreams


def _unit(index: int, dim: int, sign: float = 1.0, dtype=torch.float64) -> torch.Tensor:
    vector = torch.zeros(dim, dtype=dtype)
    vector[index] = sign
    return vector


def test_bank_starts_full_of_unit_vectors():
    bank = MemoryBank(16, 8, RngStreams(0))
    assert bank.capacity == 16 and bank.dim == 8
    assert torch.allclose(bank.entries.norm(dim=-1), torch.ones(16), atol=1e-5)
    with pytest.raises(ValidationError):
        MemoryBank(0, 8)


def test_bank_push_is_fifo():
    """Pushes overwrite the oldest slot and the cursor wraps modulo K."""
    bank = MemoryBank(3, 4)
    for i in range(4):
        bank_push(bank, _unit(i % 4, 4, dtype=torch.float32))
    assert bank.cursor == 1
    assert torch.equal(bank.read(-1), _unit(3, 4, dtype=torch.float32))
    assert torch.equal(bank.entries[1], _unit(1, 4, dtype=torch.float32))


def test_bank_rejects_bad_embeddings():
    bank = MemoryBank(4, 4)
    with pytest.raises(ValidationError, match="unit-norm"):
        bank_push(bank, torch.full((4,), 0.9))
    with pytest.raises(ValidationError, match="dimension"):
        bank_push(bank, torch.ones(3) / math.sqrt(3))


def test_infonce_is_log_k_when_all_logits_tie():
    """Orthogonal anchor and candidates give -log(1/K)."""
    bank = MemoryBank(8, 4, dtype=torch.float64)
    bank.entries = _unit(1, 4).repeat(8, 1)
    loss = infonce_loss(_unit(0, 4), _unit(1, 4), bank, temperature=0.07)
    assert loss.item() == pytest.approx(math.log(8), abs=1e-9)

    visual_bank = MemoryBank(8, 4, dtype=torch.float64)
    visual_bank.entries = _unit(0, 4).repeat(8, 1)
    total = cvtp_loss(_unit(0, 4)[None], _unit(1, 4)[None], visual_bank, bank, 0.07)
    assert total.item() == pytest.approx(2 * math.log(8), abs=1e-9)


def test_infonce_with_opposite_negatives():
    """Positive at +1 and every negative at -1 gives log(1 + (K-1)·e^{-2/τ})."""
    temperature, capacity = 0.5, 8
    bank = MemoryBank(capacity, 4, dtype=torch.float64)
    bank.entries = _unit(0, 4, sign=-1.0).repeat(capacity, 1)
    loss = infonce_loss(_unit(0, 4), _unit(0, 4), bank, temperature)
    expected = math.log(1.0 + (capacity - 1) * math.exp(-2.0 / temperature))
    assert loss.item() == pytest.approx(expected, rel=1e-12)


def test_infonce_gradient_matches_finite_differences():
    torch.manual_seed(0)
    bank = MemoryBank(6, 5, RngStreams(1), dtype=torch.float64)
    anchor = F.normalize(torch.randn(2, 5, dtype=torch.float64), dim=-1).requires_grad_(True)
    positive = F.normalize(torch.randn(2, 5, dtype=torch.float64), dim=-1).requires_grad_(True)
    assert torch.autograd.gradcheck(lambda a, p: infonce_loss(a, p, bank, 0.2), (anchor, positive))


@pytest.mark.parametrize("seed", range(5))
def test_symmetric_loss_gradient_through_encoders(seed):
    """Finite differences agree with autograd through both tiny clip encoders."""
    torch.manual_seed(seed)
    config = tiny_encoder_config(tiny_width=3, embed_dim=4)
    visual_encoder = ClipEncoder(config).double()
    tactile_encoder = ClipEncoder(config).double()
    visual_bank = MemoryBank(6, 4, RngStreams(seed), 0, dtype=torch.float64)
    tactile_bank = MemoryBank(6, 4, RngStreams(seed), 1, dtype=torch.float64)
    visual = torch.rand(2, 3 * WINDOW, 4, 4, dtype=torch.float64, requires_grad=True)
    tactile = torch.rand(2, 3 * WINDOW, 4, 4, dtype=torch.float64, requires_grad=True)

    def loss(v, t):
        return cvtp_loss(visual_encoder(v), tactile_encoder(t), visual_bank, tactile_bank, 0.5)

    assert torch.autograd.gradcheck(loss, (visual, tactile), atol=1e-8, rtol=1e-4)


def test_infonce_validation():
    bank = MemoryBank(4, 4, dtype=torch.float64)
    with pytest.raises(ValidationError):
        infonce_loss(_unit(0, 4), _unit(0, 4), bank, temperature=0.0)
    with pytest.raises(ValidationError):
        infonce_loss(_unit(0, 4)[None], _unit(0, 4).repeat(2, 1), bank, temperature=0.1)


def test_symmetric_loss_sums_both_directions():
    visual_bank = MemoryBank(4, 4, RngStreams(0), dtype=torch.float64)
    tactile_bank = MemoryBank(4, 4, RngStreams(1), dtype=torch.float64)
    v, t = _unit(0, 4)[None], _unit(1, 4)[None]
    total = cvtp_loss(v, t, visual_bank, tactile_bank, 0.1)
    parts = infonce_loss(v, t, tactile_bank, 0.1) + infonce_loss(t, v, visual_bank, 0.1)
    assert total.item() == pytest.approx(parts.item())


def test_encoder_outputs_unit_embeddings(tiny_dataset):
    encoder = ClipEncoder(tiny_encoder_config())
    embeddings = encode_visual_clip([s.visual for s in tiny_dataset.samples], encoder)
    assert embeddings.shape == (len(tiny_dataset), 8)
    assert np.allclose(np.linalg.norm(embeddings, axis=1), 1.0, atol=1e-5)
    single = encode_tactile_clip(tiny_dataset.samples[0].tactile, encoder)
    assert single.shape == (8,)


def test_encoder_rejects_wrong_window(tiny_dataset):
    encoder = ClipEncoder(tiny_encoder_config(window=5))
    with pytest.raises(ValidationError):
        encode_visual_clip(tiny_dataset.samples[0].visual, encoder)
    with pytest.raises(ValueError):
        tiny_encoder_config(window=4)


def test_retrieval_accuracy():
    """Perfectly paired embeddings retrieve their partner; shuffled ones do not."""
    embeddings = np.eye(4, dtype=np.float32)
    assert retrieval_accuracy(embeddings, embeddings) == {"visual_to_tactile": 1.0, "tactile_to_visual": 1.0}
    shifted = np.roll(embeddings, 1, axis=0)
    assert retrieval_accuracy(embeddings, shifted)["visual_to_tactile"] == 0.0
    with pytest.raises(ValidationError):
        retrieval_accuracy(embeddings, embeddings[:3])


def _train(dataset, seed: int = 0):
    config = CvtpTrainConfig(epochs=2, batch_size=4, lr=0.05, bank_size=16, log_every=1)
    return train_cvtp(dataset, tiny_encoder_config(), config, RngStreams(seed))


def test_training_is_deterministic(tiny_dataset):
    """Same seed, same losses and weights."""
    a, b = _train(tiny_dataset), _train(tiny_dataset)
    assert a.step == 4
    assert a.losses == b.losses
    assert all(np.isfinite(a.losses))
    for x, y in zip(a.visual_encoder.parameters(), b.visual_encoder.parameters()):
        assert torch.equal(x, y)
    assert a.visual_bank.cursor == len(tiny_dataset) * 2 % 16


def test_training_rejects_mismatched_window(tiny_dataset):
    config = CvtpTrainConfig(epochs=1, batch_size=4, bank_size=16)
    with pytest.raises(ValidationError):
        train_cvtp(tiny_dataset, tiny_encoder_config(window=WINDOW + 2), config, RngStreams(0))
    with pytest.raises(ValidationError):
        train_cvtp(tiny_dataset, tiny_encoder_config(), config.model_copy(update={"bank_size": 2}), RngStreams(0))


def test_checkpoint_round_trip(tmp_path, tiny_dataset):
    """Saved encoders reproduce their embeddings; banks keep their cursor."""
    model = _train(tiny_dataset)
    path = save_cvtp(tmp_path / "cvtp.vtck", model, {"retrieval": {"visual_to_tactile": 0.5}})
    loaded = load_cvtp(path)

    clips = [s.tactile for s in tiny_dataset.samples]
    assert np.array_equal(
        encode_tactile_clip(clips, model.tactile_encoder), encode_tactile_clip(clips, loaded.tactile_encoder)
    )
    assert loaded.encoder_config == model.encoder_config
    assert loaded.tactile_bank.cursor == model.tactile_bank.cursor
    assert loaded.step == model.step


def test_loading_a_foreign_archive_fails(tmp_path):
    from utils.checkpoint import save_archive

    path = save_archive(tmp_path / "other.vtck", {"x": np.zeros(1)}, {"kind": "denoiser"})
    with pytest.raises(CheckpointError, match="not a CVTP"):
        load_cvtp(path)


def test_build_model_initialises_from_streams():
    a = build_cvtp_model(tiny_encoder_config(), 8, RngStreams(3))
    b = build_cvtp_model(tiny_encoder_config(), 8, RngStreams(3))
    assert torch.equal(a.visual_encoder.projection.weight, b.visual_encoder.projection.weight)
    assert not torch.equal(a.visual_encoder.projection.weight, a.tactile_encoder.projection.weight)


@pytest.mark.slow
def test_retrieval_after_training_on_textured_pairs():
    """64 pairs, identity-codec 64×64 frames: top-1 cross-modal retrieval reaches 90% both ways.

    Flat surfaces render identical touches, so only textured classes take part.
    """
    pairs = [
        synth_pair(SynthParams(roughness=1 + i % 2, num_classes=3, frames=WINDOW + 2, image_size=64, seed=i))
        for i in range(64)
    ]
    dataset = PairDataset(pair_to_sample(pair, WINDOW // 2, entry_name(i)) for i, pair in enumerate(pairs))
    encoder_config = EncoderConfig(backbone="resnet18", window=WINDOW, embed_dim=128)
    train_config = CvtpTrainConfig(epochs=150, batch_size=16, lr=0.05, bank_size=64)
    model = train_cvtp(dataset, encoder_config, train_config, RngStreams(0))

    visual = encode_visual_clip([s.visual for s in dataset.samples], model.visual_encoder)
    tactile = encode_tactile_clip([s.tactile for s in dataset.samples], model.tactile_encoder)
    accuracy = retrieval_accuracy(visual, tactile)
    assert accuracy["visual_to_tactile"] >= 0.9
    assert accuracy["tactile_to_visual"] >= 0.9
