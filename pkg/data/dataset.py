"""Torch view over loaded visuo-tactile samples."""

from typing import Dict, Iterable, List, Sequence

import numpy as np
import torch
from torch.utils.data import Dataset

from utils.errors import ValidationError

from .types import PairSample


def frame_to_tensor(frame: np.ndarray) -> torch.Tensor:
    """H×W×C array to a contiguous C×H×W float tensor."""
    return torch.from_numpy(np.ascontiguousarray(np.transpose(np.asarray(frame, dtype=np.float32), (2, 0, 1))))


def tensor_to_frame(tensor: torch.Tensor) -> np.ndarray:
    """C×H×W tensor back to an H×W×C float32 array."""
    return np.ascontiguousarray(tensor.detach().cpu().numpy().transpose(1, 2, 0)).astype(np.float32)


class PairDataset(Dataset):
    """Indexable dataset of :class:`PairSample` items.

    Each item is a dict of tensors: early-fusion clips ``visual``/``tactile``
    (3w×H×W), centre frames, the mask (1×H×W, all ones when absent),
    reflectance and reference frames in [-1, 1] (zeros when absent) and the label.
    """

    def __init__(self, samples: Iterable[PairSample]):
        self.samples: List[PairSample] = list(samples)
        if not self.samples:
            raise ValidationError("dataset is empty")
        windows = {s.visual.window for s in self.samples}
        shapes = {s.visual.shape for s in self.samples}
        if len(windows) != 1 or len(shapes) != 1:
            raise ValidationError(f"samples mix clip lengths {sorted(windows)} or frame sizes {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def window(self) -> int:
        return self.samples[0].visual.window

    @property
    def frame_shape(self):
        return self.samples[0].visual.shape

    @property
    def labels(self) -> List[int]:
        return [s.label for s in self.samples]

    def has_field(self, name: str) -> bool:
        """True when every sample carries ``name`` (mask, reflectance, reference, shading)."""
        return all(getattr(s, name) is not None for s in self.samples)

    def missing_entries(self, name: str) -> List[str]:
        return [s.entry_id for s in self.samples if getattr(s, name) is None]

    def __getitem__(self, index: int) -> Dict[str, torch.Tensor]:
        sample = self.samples[index]
        height, width = sample.visual.shape
        if sample.mask is not None:
            mask = torch.from_numpy(sample.mask.mask.astype(np.float32))[None]
        else:
            mask = torch.ones(1, height, width)
        if sample.reflectance is not None:
            reflectance = frame_to_tensor(sample.reflectance.as_frame())
        else:
            reflectance = torch.zeros(3, height, width)
        if sample.reference is not None:
            reference = frame_to_tensor(sample.reference)
        else:
            reference = torch.zeros(3, height, width)
        return {
            "index": torch.tensor(index),
            "visual": sample.visual.to_tensor(),
            "tactile": sample.tactile.to_tensor(),
            "visual_center": frame_to_tensor(sample.visual.center),
            "tactile_center": frame_to_tensor(sample.tactile.center),
            "mask": mask,
            "reflectance": reflectance,
            "reference": reference,
            "label": torch.tensor(sample.label, dtype=torch.long),
        }


def stack_items(dataset: PairDataset, indices: Sequence[int]) -> Dict[str, torch.Tensor]:
    """Collate ``dataset[i]`` for ``indices`` into one batch dict."""
    items = [dataset[int(i)] for i in indices]
    return {key: torch.stack([item[key] for item in items]) for key in items[0]}
