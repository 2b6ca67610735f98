"""Procedural visuo-tactile pairs with known reflectance, shading and contact geometry.

A random heightfield whose amplitude and frequency grow with the roughness
class is seen two ways: by a camera (Lambertian shading times a flat albedo)
and by a GelSight-style gel pressed into it (three coloured directional
lights over the indentation map).
"""

import logging
from typing import Iterable, List, Optional

import numpy as np
from tqdm import tqdm

from utils.rng import RngStreams

from .types import ReflectanceMap, SegMask, SynthPair, SynthParams, TactileClip, VisualClip

logger = logging.getLogger("vt.data")

NUM_WAVES = 4
LIGHT_ELEVATION = np.deg2rad(35.0)
LIGHT_AZIMUTH = np.deg2rad(30.0)
LIGHT_DRIFT = np.deg2rad(3.0)  # per frame, so camera frames differ across the clip
REFERENCE_AZIMUTH = np.deg2rad(150.0)

# GelSight-style rendering: red, green and blue lights 120 degrees apart
GEL_LIGHT_AZIMUTHS = np.deg2rad([90.0, 210.0, 330.0])
GEL_BACKGROUND = np.array([0.45, 0.45, 0.50], dtype=np.float32)
GEL_GAIN = 0.8
GEL_TEXTURE_GAIN = 0.5
INDENTER_RADIUS = 2.0  # in image widths
CONTACT_THRESHOLD = 0.05

OCCLUDER_ALBEDO = np.array([0.80, 0.60, 0.50], dtype=np.float32)
OCCLUDER_SHADING = np.float32(0.85)


def heightfield(params: SynthParams, rng: np.random.Generator) -> np.ndarray:
    """Sum of randomly oriented sinusoids; identically zero for roughness class 0."""
    size = params.image_size
    # Draws happen for every class so that the remaining streams line up
    thetas = rng.uniform(0.0, np.pi, NUM_WAVES)
    phases = rng.uniform(0.0, 2.0 * np.pi, NUM_WAVES)
    jitter = rng.uniform(-0.15, 0.15, NUM_WAVES)
    weights = rng.uniform(0.5, 1.0, NUM_WAVES)
    if params.amplitude == 0.0:
        return np.zeros((size, size), dtype=np.float64)

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    field = np.zeros((size, size), dtype=np.float64)
    for theta, phase, jit, weight in zip(thetas, phases, jitter, weights):
        cycles = params.frequency * (1.0 + jit)
        projection = xs * np.cos(theta) + ys * np.sin(theta)
        field += weight * np.sin(2.0 * np.pi * cycles * projection / size + phase)
    return params.amplitude * field / np.sqrt(NUM_WAVES)


def lambertian_shading(height: np.ndarray, azimuth: float) -> np.ndarray:
    """Shading max(0, n·l) of a heightfield under a distant light."""
    gy, gx = np.gradient(height)
    norm = np.sqrt(gx ** 2 + gy ** 2 + 1.0)
    light = np.array([
        np.sin(LIGHT_ELEVATION) * np.cos(azimuth),
        np.sin(LIGHT_ELEVATION) * np.sin(azimuth),
        np.cos(LIGHT_ELEVATION),
    ])
    shading = (-gx * light[0] - gy * light[1] + light[2]) / norm
    return np.clip(shading, 0.0, 1.0)


def occluder_mask(params: SynthParams) -> np.ndarray:
    """Circular hand/sensor region below the contact point; 0 inside, 1 elsewhere."""
    size = params.image_size
    mask = np.ones((size, size), dtype=np.uint8)
    if not params.occluder:
        return mask
    ys, xs = np.mgrid[0:size, 0:size]
    cy, cx = size * 0.5 + size / 5.0, size * 0.5
    inside = (ys - cy) ** 2 + (xs - cx) ** 2 <= (size / 6.0) ** 2
    mask[inside] = 0
    return mask


def press_map(height: np.ndarray, depth: float, params: SynthParams) -> np.ndarray:
    """Gel indentation max(0, depth - gap) under a spherical indenter carrying the texture."""
    size = params.image_size
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    center = (size - 1) / 2.0
    radius = INDENTER_RADIUS * size
    gap = ((xs - center) ** 2 + (ys - center) ** 2) / (2.0 * radius) - GEL_TEXTURE_GAIN * height
    return np.maximum(0.0, depth - gap)


def render_gel(deformation: np.ndarray) -> np.ndarray:
    """Colour image in [0, 1] of the gel lit by three directional lights."""
    gy, gx = np.gradient(deformation)
    image = np.empty(deformation.shape + (3,), dtype=np.float64)
    for channel, azimuth in enumerate(GEL_LIGHT_AZIMUTHS):
        image[..., channel] = GEL_BACKGROUND[channel] + GEL_GAIN * (-gx * np.cos(azimuth) - gy * np.sin(azimuth))
    return np.clip(image, 0.0, 1.0)


def contact_area(deformation: np.ndarray, threshold: float = CONTACT_THRESHOLD) -> int:
    """Number of pixels whose indentation exceeds ``threshold``."""
    return int(np.count_nonzero(deformation > threshold))


def synth_pair(params: SynthParams) -> SynthPair:
    """Synthesize one visuo-tactile pair.

    Args:
        params: Roughness class, albedo, frame count, image size, occluder flag and seed.

    Returns:
        SynthPair whose camera frames satisfy visual = reflectance ⊙ shading exactly
        (in [0, 1], float32) and whose press depth increases across the clip.
    """
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, params.roughness, params.image_size]))
    height = heightfield(params, rng)
    albedo_draw = rng.uniform(0.35, 0.9, 3)
    albedo = np.asarray(params.albedo if params.albedo is not None else albedo_draw, dtype=np.float32)

    mask = occluder_mask(params)
    hand = mask == 0
    reflectance = np.broadcast_to(albedo, mask.shape + (3,)).copy()
    reflectance[hand] = OCCLUDER_ALBEDO

    center = params.frames // 2
    shading = np.empty((params.frames,) + mask.shape, dtype=np.float32)
    for k in range(params.frames):
        frame_shading = lambertian_shading(height, LIGHT_AZIMUTH + LIGHT_DRIFT * (k - center)).astype(np.float32)
        frame_shading[hand] = OCCLUDER_SHADING
        shading[k] = frame_shading
    visual_unit = reflectance[None] * shading[..., None]

    press = np.stack([press_map(height, depth, params) for depth in params.press_depths])
    tactile_unit = np.stack([render_gel(deformation) for deformation in press])

    reference_shading = lambertian_shading(height, REFERENCE_AZIMUTH).astype(np.float32)
    reference_unit = albedo[None, None, :] * reference_shading[..., None]

    return SynthPair(
        params=params,
        visual=VisualClip(visual_unit * 2.0 - 1.0),
        tactile=TactileClip((tactile_unit * 2.0 - 1.0).astype(np.float32)),
        mask=SegMask(mask),
        reflectance=ReflectanceMap(reflectance),
        shading=shading,
        press_maps=press.astype(np.float32),
        reference=(reference_unit * 2.0 - 1.0).astype(np.float32),
        visual_unit=visual_unit,
    )


def synth_params_for(
    index: int,
    streams: RngStreams,
    num_classes: int = 3,
    frames: int = 7,
    image_size: int = 64,
    occluder: bool = False,
    albedo: Optional[tuple] = None,
) -> SynthParams:
    """Parameters of dataset item ``index``; classes are assigned round-robin."""
    return SynthParams(
        roughness=index % num_classes,
        num_classes=num_classes,
        albedo=albedo,
        frames=frames,
        image_size=image_size,
        occluder=occluder,
        seed=streams.seed_for("synth", index),
    )


def synthesize_dataset(
    num_pairs: int,
    seed: int,
    num_classes: int = 3,
    frames: int = 7,
    image_size: int = 64,
    occluder: bool = False,
    albedo: Optional[tuple] = None,
    progress: bool = False,
) -> List[SynthPair]:
    """Synthesize ``num_pairs`` pairs deterministically from ``seed``."""
    streams = RngStreams(seed)
    indices: Iterable[int] = range(num_pairs)
    if progress:
        indices = tqdm(indices, desc="synthesizing pairs", unit="pair")
    pairs = [
        synth_pair(synth_params_for(i, streams, num_classes, frames, image_size, occluder, albedo))
        for i in indices
    ]
    logger.info(f"Synthesized {len(pairs)} pairs ({num_classes} roughness classes, {image_size}px, seed {seed})")
    return pairs
