"""Test task specs, conditioning, task training, bundles and inference pipelines."""

import json
import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

import numpy as np
import pytest
import torch
from scipy.stats import spearmanr

from conftest import EMBED_DIM, IMAGE_SIZE, tiny_encoder_config, toy_dataset, train_overfit_bundle, train_tiny_bundle
from cvtp import CvtpTrainConfig, train_cvtp
from data import PairDataset, stack_items
from data.manifest import pair_to_sample
from metrics import RoughnessOracle, material_consistency
from tasks import (
    ClipConditioner,
    ImageToTouchTask,
    LabelConditioner,
    NullConditioner,
    SingleFrameConditioner,
    TaskRequest,
    TaskSpec,
    TaskStatus,
    TouchToImageTask,
    build_conditioner,
    condition_inputs,
    image_to_touch,
    implied_shading,
    load_bundle,
    preflight,
    save_bundle,
    shading_estimate,
    stylize,
    touch_to_image,
)
from tasks.bundle import BUNDLE_FILE
from utils.errors import CheckpointError, ConfigurationError, MissingArgumentError, ValidationError
from utils.rng import RngStreams


def _generator(seed: int = 0) -> torch.Generator:
    return RngStreams(seed).torch_generator("sample", 0)


# Task spec


def test_spec_modalities_and_required_fields():
    spec = TaskSpec(direction="touch_to_image", hand_free=True, concat_source="reflectance")
    assert spec.condition_modality == "tactile"
    assert spec.target_modality == "visual"
    assert spec.required_fields() == ["mask", "reflectance"]
    assert TaskSpec(direction="image_to_touch").condition_modality == "visual"


def test_concatenation_only_for_touch_to_image():
    with pytest.raises(ValueError):
        TaskSpec(direction="image_to_touch", concat_source="reflectance")


def test_hand_masks_only_for_touch_to_image():
    """Masks come from camera frames; a predicted touch has no hand to mask."""
    with pytest.raises(ValueError, match="hand-free"):
        TaskSpec(direction="image_to_touch", hand_free=True)
    assert TaskSpec(direction="touch_to_image", hand_free=True).required_fields() == ["mask"]


def test_resolve_level():
    """Explicit level, then the task's sdedit_level, then T/2."""
    assert TaskSpec().resolve_level(1000) == 500
    assert TaskSpec(sdedit_level=300).resolve_level(1000) == 300
    assert TaskSpec(sdedit_level=300).resolve_level(1000, 0) == 0
    with pytest.raises(ValidationError):
        TaskSpec().resolve_level(1000, 1001)


def test_preflight_names_entries_missing_a_field(synth_pairs):
    samples = [pair_to_sample(pair, 1, f"entry_{i}") for i, pair in enumerate(synth_pairs[:3])]
    samples[1].reflectance = None
    with pytest.raises(ValidationError, match="entry_1"):
        preflight(TaskSpec(concat_source="reflectance"), PairDataset(samples))


# Conditioning


def test_conditioners_for_each_source(tiny_dataset):
    config = tiny_encoder_config()
    batch = stack_items(tiny_dataset, [0, 1])

    clip = build_conditioner(TaskSpec(condition_source="clip"), config, 3)
    single = build_conditioner(TaskSpec(condition_source="single_frame"), config, 3)
    label = build_conditioner(TaskSpec(condition_source="material_label"), config, 3)
    null = build_conditioner(TaskSpec(condition_source="none"), config, 3)

    assert isinstance(clip, ClipConditioner) and clip.modality == "tactile"
    assert isinstance(single, SingleFrameConditioner)
    assert isinstance(label, LabelConditioner)
    assert isinstance(null, NullConditioner)
    for conditioner in (clip, single, label):
        assert conditioner(batch).shape == (2, EMBED_DIM)
    assert torch.all(null(batch) == 0)


def test_label_conditioner_rejects_unknown_class():
    conditioner = LabelConditioner(3, EMBED_DIM)
    with pytest.raises(ValidationError):
        conditioner({"label": torch.tensor([3])})


def test_clip_conditioner_starts_from_pretrained_encoder(tiny_dataset):
    """The condition encoder copies the CVTP encoder of the conditioning modality."""
    config = tiny_encoder_config()
    model = train_cvtp(tiny_dataset, config, CvtpTrainConfig(epochs=1, batch_size=4, bank_size=8), RngStreams(0))
    conditioner = build_conditioner(TaskSpec(), config, 3, model)
    for mine, theirs in zip(conditioner.encoder.parameters(), model.tactile_encoder.parameters()):
        assert torch.equal(mine, theirs)

    with pytest.raises(ConfigurationError):
        build_conditioner(TaskSpec(), tiny_encoder_config(embed_dim=4), 3, model)


def test_condition_inputs_shapes(tiny_dataset):
    clip = tiny_dataset.samples[0].tactile
    batch = condition_inputs(clip, "tactile", label=2)
    assert batch["tactile"].shape == (1, 9, IMAGE_SIZE, IMAGE_SIZE)
    assert batch["tactile_center"].shape == (1, 3, IMAGE_SIZE, IMAGE_SIZE)
    assert batch["label"].tolist() == [2]


# Training and bundles


def test_training_is_deterministic(tiny_dataset, touch_bundle):
    again = train_tiny_bundle(tiny_dataset, TaskSpec(direction="touch_to_image"))
    assert again.metadata["losses"] == touch_bundle.metadata["losses"]
    assert again.fingerprint == touch_bundle.fingerprint
    assert all(np.isfinite(touch_bundle.metadata["losses"]))


def test_hand_free_training_never_reaches_masked_cells(tiny_dataset):
    """Masked latent cells get exactly zero gradient, so training completes."""
    bundle = train_tiny_bundle(tiny_dataset, TaskSpec(hand_free=True), epochs=2)
    assert bundle.task_spec.hand_free
    assert bundle.metadata["step"] == 4


def test_bundle_round_trip(tmp_path, touch_bundle):
    """A saved bundle reloads with the same fingerprint and the same samples."""
    save_bundle(tmp_path / "bundle", touch_bundle)
    loaded = load_bundle(tmp_path / "bundle")
    assert loaded.fingerprint == touch_bundle.fingerprint
    assert loaded.verify_fingerprint()
    assert loaded.latent_shape == (3, IMAGE_SIZE, IMAGE_SIZE)

    description = json.loads((tmp_path / "bundle" / BUNDLE_FILE).read_text())
    assert description["task"]["direction"] == "touch_to_image"
    assert description["schedule"]["timesteps"] == 50


def test_tampered_bundle_fails_verification(tmp_path, touch_bundle):
    save_bundle(tmp_path / "bundle", touch_bundle)
    description_file = tmp_path / "bundle" / BUNDLE_FILE
    description = json.loads(description_file.read_text())
    description["fingerprint"] = "0" * 64
    description_file.write_text(json.dumps(description))
    assert not load_bundle(tmp_path / "bundle").verify_fingerprint()


def test_missing_bundle(tmp_path):
    with pytest.raises(CheckpointError):
        load_bundle(tmp_path / "absent")


# Pipelines


def test_touch_to_image_is_reproducible(tiny_dataset, touch_bundle):
    clip = tiny_dataset.samples[0].tactile
    a = touch_to_image(clip, touch_bundle, _generator(1))
    b = touch_to_image(clip, touch_bundle, _generator(1))
    assert a.shape == (IMAGE_SIZE, IMAGE_SIZE, 3)
    assert np.array_equal(a, b)
    assert a.min() >= -1.0 and a.max() <= 1.0


def test_wrong_direction_is_a_configuration_error(tiny_dataset, touch_bundle):
    """An image→touch request on a touch→image bundle fails with E_CONFIG."""
    request = TaskRequest(bundle=touch_bundle, visual=tiny_dataset.samples[0].visual)
    result = ImageToTouchTask().execute(request)
    assert result.status == TaskStatus.FAILED
    assert result.error_code == "E_CONFIG"
    with pytest.raises(ConfigurationError):
        image_to_touch(tiny_dataset.samples[0].visual, touch_bundle)


def test_missing_clip_is_reported(touch_bundle):
    result = TouchToImageTask().execute(TaskRequest(bundle=touch_bundle))
    assert result.error_code == "E_MISSING_ARG"


def test_clip_window_must_match(synth_pairs, touch_bundle):
    long_clip = pair_to_sample(synth_pairs[0], 2).tactile
    with pytest.raises(ValidationError):
        touch_to_image(long_clip, touch_bundle)


def test_image_to_touch(tiny_dataset):
    bundle = train_tiny_bundle(tiny_dataset, TaskSpec(direction="image_to_touch"))
    touch = image_to_touch(tiny_dataset.samples[2].visual, bundle, _generator())
    assert touch.shape == (IMAGE_SIZE, IMAGE_SIZE, 3)


def test_stylize_level_zero_returns_the_input(tiny_dataset, touch_bundle):
    """With the identity codec, N = 0 gives back the input image."""
    image = tiny_dataset.samples[0].visual.center
    target = tiny_dataset.samples[1].tactile
    assert np.allclose(stylize(image, target, 0, touch_bundle, _generator()), image, atol=1e-6)

    edited = stylize(image, target, None, touch_bundle, _generator())
    assert edited.shape == image.shape
    with pytest.raises(ValidationError):
        stylize(image, target, 51, touch_bundle, _generator())


def test_stylize_rejects_concatenating_bundles(tiny_dataset, reflectance_bundle):
    sample = tiny_dataset.samples[0]
    with pytest.raises(ConfigurationError):
        stylize(sample.visual.center, sample.tactile, 10, reflectance_bundle)


def test_shading_estimate(tiny_dataset, reflectance_bundle):
    """The shading is the generated image divided by the reflectance."""
    sample = tiny_dataset.samples[1]
    estimate = shading_estimate(sample.reflectance, sample.tactile, reflectance_bundle, _generator())
    assert estimate.shading.shape == (IMAGE_SIZE, IMAGE_SIZE)
    assert np.allclose(estimate.shading, implied_shading(estimate.image, sample.reflectance))


def test_shading_needs_a_reflectance_bundle(tiny_dataset, touch_bundle):
    sample = tiny_dataset.samples[0]
    with pytest.raises(ConfigurationError):
        shading_estimate(sample.reflectance, sample.tactile, touch_bundle)


def test_reflectance_bundle_requires_the_map(tiny_dataset, reflectance_bundle):
    with pytest.raises(MissingArgumentError):
        touch_to_image(tiny_dataset.samples[0].tactile, reflectance_bundle)


def test_implied_shading_inverts_the_product(synth_pairs):
    """Rendering R ⊙ S and dividing by R returns S up to the ε guard."""
    pair = synth_pairs[2]
    image = pair.visual.frames[pair.visual.half_window]
    shading = implied_shading(image, pair.reflectance)
    reflectance = pair.reflectance.pixels.astype(np.float64)
    product = reflectance * pair.shading[pair.visual.half_window][..., None]
    expected = (product / (reflectance + 1e-3)).mean(axis=2)
    assert shading.dtype == np.float32
    assert np.allclose(shading, expected, atol=1e-5)


def test_stylize_at_full_level_is_plain_sampling(tiny_dataset, touch_bundle):
    """N = T ignores the input image: the chain is the one touch_to_image runs with the same seed."""
    target = tiny_dataset.samples[1].tactile
    first = stylize(tiny_dataset.samples[0].visual.center, target, 50, touch_bundle, _generator(3))
    second = stylize(tiny_dataset.samples[2].visual.center, target, 50, touch_bundle, _generator(3))
    sampled = touch_to_image(target, touch_bundle, _generator(3))
    assert np.array_equal(first, sampled)
    assert np.array_equal(first, second)


def test_stylize_drifts_further_with_the_level(tiny_dataset, touch_bundle):
    """Mean pixel L2 to the input never decreases over N ∈ {0, T/4, T/2, 3T/4, T}."""
    image = tiny_dataset.samples[0].visual.center
    target = tiny_dataset.samples[1].tactile
    levels = [0, 12, 25, 37, 50]
    distances = [
        np.mean([np.linalg.norm(stylize(image, target, level, touch_bundle, _generator(seed)) - image)
                 for seed in range(32)])
        for level in levels
    ]
    assert distances[0] == pytest.approx(0.0, abs=1e-5)
    assert all(b >= a for a, b in zip(distances, distances[1:]))


# Overfit acceptance


@pytest.fixture(scope="module")
def two_class_bundle():
    dataset = toy_dataset(32, num_classes=2)
    return dataset, train_overfit_bundle(dataset, TaskSpec(direction="touch_to_image", guidance_scale=3.0), 2)


@pytest.mark.slow
def test_overfit_training_drives_the_loss_down(two_class_bundle):
    """The moving-average loss ends below a tenth of where it started."""
    _, bundle = two_class_bundle
    losses = bundle.metadata["losses"]
    assert np.mean(losses[-50:]) < 0.1 * np.mean(losses[:10])


@pytest.mark.slow
def test_overfit_samples_follow_the_touched_material(two_class_bundle):
    """Samples conditioned on a class's touch are classified as that class."""
    dataset, bundle = two_class_bundle
    references = [s.visual.center for s in dataset.samples]
    oracle = RoughnessOracle().fit(references, dataset.labels)

    chosen = [dataset.samples[seed] for seed in range(32)]
    generated = [touch_to_image(s.tactile, bundle, _generator(seed), steps=50) for seed, s in enumerate(chosen)]
    labels = np.array([s.label for s in chosen])
    assert np.mean(oracle.predict(generated) == labels) >= 0.8
    assert material_consistency(generated, [s.visual.center for s in chosen], oracle) >= 0.8


@pytest.fixture(scope="module")
def flat_albedo_shading():
    """Implied-shading variance per class for 100 seeds, with and without the touch."""
    dataset = toy_dataset(30, num_classes=3, albedo=(0.6, 0.6, 0.6))
    bundle = train_overfit_bundle(dataset, TaskSpec(concat_source="reflectance", guidance_scale=3.0), 3)

    def variances(guidance_scale):
        result = []
        for seed in range(100):
            sample = dataset.samples[seed % len(dataset)]
            estimate = shading_estimate(sample.reflectance, sample.tactile, bundle, _generator(seed),
                                        steps=50, guidance_scale=guidance_scale)
            result.append(float(np.var(estimate.shading)))
        return np.array(result)

    labels = np.array([dataset.samples[seed % len(dataset)].label for seed in range(100)])
    return labels, variances(None), variances(0.0)


@pytest.mark.slow
def test_implied_shading_tracks_roughness(flat_albedo_shading):
    labels, touched, _ = flat_albedo_shading
    assert spearmanr(labels, touched).correlation > 0.8
    assert touched[labels == 0].mean() < touched[labels == 2].mean()


@pytest.mark.slow
def test_touch_improves_shading_over_reflectance_alone(flat_albedo_shading):
    """Zeroing the tactile condition (the null branch only) loses the roughness signal."""
    labels, touched, reflectance_only = flat_albedo_shading
    assert spearmanr(labels, reflectance_only).correlation < spearmanr(labels, touched).correlation
