"""Visuo-tactile data: containers, manifest IO, synthetic generator and mask handling."""

from .dataset import PairDataset, frame_to_tensor, stack_items, tensor_to_frame
from .image_io import from_frame, read_frame, to_frame, write_frame
from .manifest import load_manifest, pair_to_sample, read_manifest, write_dataset, write_samples
from .masks import downsample_mask, downsample_mask_batch
from .synth import contact_area, synth_pair, synthesize_dataset
from .types import (
    DEFAULT_WINDOW,
    Clip,
    ManifestEntry,
    PairManifest,
    PairSample,
    ReflectanceMap,
    SegMask,
    SynthPair,
    SynthParams,
    TactileClip,
    VisualClip,
    check_image_frame,
)

__all__ = [
    "DEFAULT_WINDOW",
    "Clip",
    "TactileClip",
    "VisualClip",
    "SegMask",
    "ReflectanceMap",
    "PairSample",
    "ManifestEntry",
    "PairManifest",
    "SynthParams",
    "SynthPair",
    "check_image_frame",
    "to_frame",
    "from_frame",
    "read_frame",
    "write_frame",
    "load_manifest",
    "read_manifest",
    "write_dataset",
    "write_samples",
    "pair_to_sample",
    "downsample_mask",
    "downsample_mask_batch",
    "synth_pair",
    "synthesize_dataset",
    "contact_area",
    "PairDataset",
    "frame_to_tensor",
    "tensor_to_frame",
    "stack_items",
]
