"""Dataset roots: ``manifest.json`` plus lossless per-entry frame files."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from utils.errors import LoadError, ValidationError

from . import image_io
from .types import (
    DEFAULT_WINDOW,
    ManifestEntry,
    PairManifest,
    PairSample,
    ReflectanceMap,
    SegMask,
    SynthPair,
    TactileClip,
    VisualClip,
)

logger = logging.getLogger("vt.data")

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def _manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_manifest(path: Union[str, Path]) -> PairManifest:
    """Parse and schema-check a manifest file (or the manifest of a dataset root)."""
    manifest_file = _manifest_path(path)
    if not manifest_file.is_file():
        raise LoadError(f"manifest not found: {manifest_file}")
    try:
        with open(manifest_file, "r", encoding="utf-8") as f:
            payload = json.load(f)
        return PairManifest.model_validate(payload)
    except json.JSONDecodeError as e:
        raise LoadError(f"manifest {manifest_file} is not valid JSON: {e}") from e
    except PydanticValidationError as e:
        raise ValidationError(f"manifest {manifest_file} violates the schema: {e.errors()[0]['msg']}") from e


def _entry_files(entry: ManifestEntry) -> List[str]:
    files = list(entry.visual) + list(entry.tactile)
    files += [p for p in (entry.mask, entry.reflectance, entry.reference, entry.shading) if p]
    return files


def _window_bounds(entry: ManifestEntry, half_window: int) -> range:
    window = 2 * half_window + 1
    if len(entry.visual) < window:
        raise ValidationError(
            f"entry '{entry.id}' has {len(entry.visual)} frames, fewer than the window of {window}"
        )
    start = entry.center - half_window
    stop = entry.center + half_window + 1
    if start < 0 or stop > len(entry.visual):
        raise ValidationError(f"entry '{entry.id}': a window of {window} around frame {entry.center} leaves the touch")
    return range(start, stop)


def _load_entry(root: Path, entry: ManifestEntry, frames: range) -> PairSample:
    try:
        visual = VisualClip(np.stack([image_io.read_frame(root / entry.visual[k]) for k in frames]))
        tactile = TactileClip(np.stack([image_io.read_frame(root / entry.tactile[k]) for k in frames]))
        mask = SegMask(image_io.read_mask(root / entry.mask)) if entry.mask else None
        reflectance = ReflectanceMap(image_io.read_unit_rgb(root / entry.reflectance)) if entry.reflectance else None
        reference = image_io.read_frame(root / entry.reference) if entry.reference else None
        shading = image_io.read_unit_gray(root / entry.shading) if entry.shading else None
    except ValidationError:
        raise
    except (OSError, ValueError) as e:
        raise LoadError(f"cannot read frames: {e}", entry_id=entry.id) from e
    return PairSample(
        entry_id=entry.id,
        visual=visual,
        tactile=tactile,
        label=entry.label,
        mask=mask,
        reflectance=reflectance,
        reference=reference,
        shading=shading,
    )


def load_manifest(path: Union[str, Path], window: int = DEFAULT_WINDOW // 2) -> Iterator[PairSample]:
    """Stream the entries of a dataset in manifest order.

    The whole manifest is checked before the first item is yielded: every
    referenced file must exist and every touch must hold a full window.

    Args:
        path: Dataset root directory or its ``manifest.json``.
        window: Half-window C; clips have 2C+1 frames centred on the contact frame.

    Returns:
        Generator of :class:`PairSample` with frames normalised to [-1, 1].

    Raises:
        LoadError: Manifest or a referenced file is missing (names the entry id).
        ValidationError: Negative C or a touch shorter than 2C+1 frames.
    """
    if window < 0:
        raise ValidationError(f"half-window C must be >= 0, got {window}")
    manifest_file = _manifest_path(path)
    manifest = read_manifest(manifest_file)
    root = manifest_file.parent

    plans = []
    for entry in manifest.entries:
        for relative in _entry_files(entry):
            if not (root / relative).is_file():
                raise LoadError(f"missing file {relative}", entry_id=entry.id)
        plans.append((entry, _window_bounds(entry, window)))

    logger.info(f"Loading {len(plans)} entries from {manifest_file} with window {2 * window + 1}")
    return (_load_entry(root, entry, frames) for entry, frames in plans)


def pair_to_sample(pair: SynthPair, window: int, entry_id: str = "synthetic") -> PairSample:
    """Cut the centred 2C+1-frame window out of a synthesized touch without touching disk."""
    total = pair.visual.window
    center = total // 2
    if total < 2 * window + 1:
        raise ValidationError(f"synthetic touch has {total} frames, fewer than the window of {2 * window + 1}")
    frames = slice(center - window, center + window + 1)
    return PairSample(
        entry_id=entry_id,
        visual=VisualClip(pair.visual.frames[frames]),
        tactile=TactileClip(pair.tactile.frames[frames]),
        label=pair.label,
        mask=pair.mask,
        reflectance=pair.reflectance,
        reference=pair.reference,
        shading=pair.shading[center],
    )


def entry_name(index: int) -> str:
    return f"pair_{index:05d}"


def _write_sample_files(root: Path, entry_id: str, sample: PairSample) -> ManifestEntry:
    visual, tactile = [], []
    for k in range(sample.visual.window):
        visual.append(f"{entry_id}/visual_{k:02d}.png")
        tactile.append(f"{entry_id}/tactile_{k:02d}.png")
        image_io.write_frame(sample.visual.frames[k], root / visual[-1])
        image_io.write_frame(sample.tactile.frames[k], root / tactile[-1])

    entry: Dict[str, Any] = {
        "id": entry_id,
        "visual": visual,
        "tactile": tactile,
        "contact_index": sample.visual.half_window,
        "label": int(sample.label),
    }
    if sample.mask is not None:
        entry["mask"] = f"{entry_id}/mask.png"
        image_io.write_mask(sample.mask.mask, root / entry["mask"])
    if sample.reflectance is not None:
        entry["reflectance"] = f"{entry_id}/reflectance.png"
        image_io.write_unit_rgb(sample.reflectance.pixels, root / entry["reflectance"])
    if sample.reference is not None:
        entry["reference"] = f"{entry_id}/reference.png"
        image_io.write_frame(sample.reference, root / entry["reference"])
    if sample.shading is not None:
        entry["shading"] = f"{entry_id}/shading.png"
        image_io.write_unit_gray(sample.shading, root / entry["shading"])
    return ManifestEntry.model_validate(entry)


def write_manifest(root: Union[str, Path], manifest: PairManifest) -> Path:
    """Write ``manifest.json`` canonically (sorted keys, two-space indent, trailing newline)."""
    path = Path(root) / MANIFEST_NAME
    payload = manifest.model_dump(mode="json", exclude_none=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def write_samples(
    root: Union[str, Path],
    samples: Sequence[PairSample],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Serialize loaded samples as a dataset root; inverse of :func:`load_manifest`."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = [_write_sample_files(root, sample.entry_id, sample) for sample in samples]
    image_size = samples[0].visual.shape[0] if samples else None
    return write_manifest(
        root,
        PairManifest(version=MANIFEST_VERSION, image_size=image_size, entries=entries, metadata=metadata or {}),
    )


def write_dataset(
    root: Union[str, Path],
    pairs: Sequence[SynthPair],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write synthesized touches (all frames, contact index in the middle) under ``root``.

    The centre-frame shading ground truth is stored next to the reflectance map.
    """
    samples = [pair_to_sample(pair, pair.visual.half_window, entry_name(i)) for i, pair in enumerate(pairs)]
    path = write_samples(root, samples, metadata)
    logger.info(f"Wrote {len(samples)} entries to {path}")
    return path
