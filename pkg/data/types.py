"""Domain containers for paired visuo-tactile data."""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field, field_validator, model_validator

from utils.errors import ValidationError

DEFAULT_WINDOW = 5


def check_image_frame(pixels: np.ndarray, factor: int = 1, name: str = "image") -> np.ndarray:
    """Validate an ImageFrame: H×W×3 real array in [-1, 1], H and W divisible by ``factor``."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValidationError(f"{name} must be H×W×3, got shape {pixels.shape}")
    height, width = pixels.shape[:2]
    if height % factor or width % factor:
        raise ValidationError(f"{name} dimensions {height}×{width} are not divisible by {factor}")
    if not np.all(np.isfinite(pixels)) or pixels.min() < -1.0 or pixels.max() > 1.0:
        raise ValidationError(f"{name} values must lie in [-1, 1]")
    return pixels


@dataclass(frozen=True)
class Clip:
    """A temporal window of w = 2C+1 frames centred on a contact frame.

    ``frames`` has shape (w, H, W, 3) with values in [-1, 1].
    """

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise ValidationError(f"clip frames must be (w, H, W, 3), got {frames.shape}")
        if frames.shape[0] % 2 != 1:
            raise ValidationError(f"clip length must be odd, got {frames.shape[0]}")
        if frames.min() < -1.0 or frames.max() > 1.0:
            raise ValidationError("clip values must lie in [-1, 1]")
        object.__setattr__(self, "frames", frames)

    @property
    def window(self) -> int:
        return int(self.frames.shape[0])

    @property
    def half_window(self) -> int:
        return self.window // 2

    @property
    def center(self) -> np.ndarray:
        return self.frames[self.half_window]

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.frames.shape[1]), int(self.frames.shape[2])

    @classmethod
    def replicate(cls, frame: np.ndarray, window: int):
        """Fill a fusion window with copies of one frame."""
        check_image_frame(frame)
        return cls(np.repeat(frame[None], window, axis=0))

    def center_only(self):
        """One-frame clip holding only the contact frame."""
        return type(self)(self.frames[self.half_window:self.half_window + 1])

    def to_tensor(self) -> torch.Tensor:
        """Early-fusion tensor (3·w, H, W), frames concatenated channel-wise in time order."""
        w, h, width, _ = self.frames.shape
        chw = np.transpose(self.frames, (0, 3, 1, 2)).reshape(w * 3, h, width)
        return torch.from_numpy(np.ascontiguousarray(chw))


class TactileClip(Clip):
    """Window of GelSight-style sensor frames."""


class VisualClip(Clip):
    """Window of camera frames synchronised with a tactile clip."""


@dataclass(frozen=True)
class SegMask:
    """Binary H×W mask: 0 = hand/sensor pixel (excluded from the loss), 1 = scene pixel."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise ValidationError(f"mask must be H×W, got shape {mask.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValidationError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "mask", mask.astype(np.uint8))


@dataclass(frozen=True)
class ReflectanceMap:
    """Per-pixel albedo, H×W×3 in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValidationError(f"reflectance must be H×W×3, got shape {pixels.shape}")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValidationError("reflectance values must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    def as_frame(self) -> np.ndarray:
        """Reflectance mapped to the ImageFrame range [-1, 1]."""
        return self.pixels * 2.0 - 1.0


@dataclass
class PairSample:
    """One loaded manifest entry."""

    entry_id: str
    visual: VisualClip
    tactile: TactileClip
    label: int
    mask: Optional[SegMask] = None
    reflectance: Optional[ReflectanceMap] = None
    reference: Optional[np.ndarray] = None
    shading: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.visual.shape != self.tactile.shape:
            raise ValidationError(f"entry '{self.entry_id}': visual and tactile frames differ in size")
        if self.visual.window != self.tactile.window:
            raise ValidationError(f"entry '{self.entry_id}': visual and tactile clips differ in length")
        if self.mask is not None and self.mask.mask.shape != self.visual.shape:
            raise ValidationError(f"entry '{self.entry_id}': mask does not match frame size")
        if self.reflectance is not None and self.reflectance.pixels.shape[:2] != self.visual.shape:
            raise ValidationError(f"entry '{self.entry_id}': reflectance does not match frame size")


class SynthParams(BaseModel):
    """Parameters of one synthetic visuo-tactile pair.

    Heightfield amplitude and frequency are functions of the roughness class, so
    identical (params, seed) always produce identical output.
    """

    roughness: int = Field(0, ge=0, description="Roughness class r in {0..R-1}")
    num_classes: int = Field(3, ge=1)
    albedo: Optional[Tuple[float, float, float]] = Field(None, description="Flat albedo; drawn from seed when None")
    frames: int = Field(DEFAULT_WINDOW, ge=1, description="Frames per touch, odd")
    image_size: int = Field(64, ge=8)
    occluder: bool = False
    seed: int = Field(0, ge=0)

    @field_validator("frames")
    @classmethod
    def validate_frames(cls, v: int) -> int:
        if v % 2 != 1:
            raise ValueError("frames per touch must be odd")
        return v

    @field_validator("albedo")
    @classmethod
    def validate_albedo(cls, v):
        if v is not None and not all(0.0 <= c <= 1.0 for c in v):
            raise ValueError("albedo components must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def validate_class(self):
        if self.roughness >= self.num_classes:
            raise ValueError(f"roughness class {self.roughness} outside 0..{self.num_classes - 1}")
        return self

    @property
    def scale(self) -> float:
        return self.image_size / 64.0

    @property
    def amplitude(self) -> float:
        """Heightfield amplitude in pixels; class 0 is a flat surface."""
        return 0.6 * self.roughness * self.scale

    @property
    def frequency(self) -> float:
        """Base spatial frequency in cycles per image width."""
        return 3.0 + 3.0 * self.roughness

    @property
    def press_depths(self) -> List[float]:
        """Indentation depth per frame, strictly increasing across the touch."""
        depth = 2.5 * self.scale
        return [depth * (k + 1) / self.frames for k in range(self.frames)]


class ManifestEntry(BaseModel):
    """One entry of ``manifest.json``; paths are relative to the dataset root."""

    id: str
    visual: List[str]
    tactile: List[str]
    contact_index: Optional[int] = Field(None, description="Centre frame of the touch; middle frame when omitted")
    mask: Optional[str] = None
    reflectance: Optional[str] = None
    reference: Optional[str] = None
    shading: Optional[str] = None
    label: int = 0

    @model_validator(mode="after")
    def validate_counts(self):
        if len(self.visual) != len(self.tactile):
            raise ValueError(f"entry '{self.id}' has {len(self.visual)} visual and {len(self.tactile)} tactile frames")
        if self.contact_index is not None and not 0 <= self.contact_index < len(self.visual):
            raise ValueError(f"entry '{self.id}' contact index {self.contact_index} out of range")
        return self

    @property
    def center(self) -> int:
        return self.contact_index if self.contact_index is not None else len(self.visual) // 2


class PairManifest(BaseModel):
    """Index of synchronized visual/tactile recordings."""

    version: int = 1
    image_size: Optional[int] = None
    entries: List[ManifestEntry] = Field(default_factory=list)
    metadata: dict = Field(default_factory=dict)


@dataclass
class SynthPair:
    """Output of :func:`data.synth.synth_pair`.

    ``shading`` and ``press_maps`` hold one map per frame; ``reflectance`` is
    shared by every frame, so ``visual[k] = reflectance ⊙ shading[k]`` in [0, 1].
    """

    params: SynthParams
    visual: VisualClip
    tactile: TactileClip
    mask: SegMask
    reflectance: ReflectanceMap
    shading: np.ndarray
    press_maps: np.ndarray
    reference: np.ndarray
    visual_unit: np.ndarray = field(repr=False, default=None)

    @property
    def label(self) -> int:
        return self.params.roughness
