"""Versioned tensor archive used for every checkpoint the toolkit writes.

Layout (little-endian)::

    magic      8 bytes   b"VTCKPT\\x00\\x01"
    version    u32
    meta_len   u64, meta (canonical JSON, UTF-8)
    count      u32
    per tensor: name_len u16, name, dtype u8, ndim u8, shape u64*ndim,
                nbytes u64, raw C-order data

Tensors are written in sorted name order, so equal content gives equal bytes.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import numpy as np
import torch

from .errors import CheckpointError

MAGIC = b"VTCKPT\x00\x01"
FORMAT_VERSION = 1

_DTYPES = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<i8"),
    3: np.dtype("u1"),
    4: np.dtype("<i4"),
    5: np.dtype("?"),
}

logger = logging.getLogger("vt.checkpoint")

TensorLike = Union[np.ndarray, torch.Tensor]


def canonical_json(payload: Any) -> str:
    """Serialize ``payload`` with sorted keys and no insignificant whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class CheckpointArchive:
    """In-memory view of an archive: metadata block plus named tensors."""

    metadata: Dict[str, Any] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def state_dict(self, prefix: str = "") -> Dict[str, torch.Tensor]:
        """Tensors under ``prefix`` as torch tensors with the prefix stripped."""
        return {
            name[len(prefix):]: torch.from_numpy(array.copy())
            for name, array in self.tensors.items()
            if name.startswith(prefix)
        }


def _as_numpy(value: TensorLike) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    return np.ascontiguousarray(value)


def _dtype_code(array: np.ndarray) -> int:
    for code, dtype in _DTYPES.items():
        if array.dtype == dtype or array.dtype.newbyteorder("<") == dtype:
            return code
    raise CheckpointError(f"unsupported tensor dtype {array.dtype}")


def save_archive(
    path: Union[str, Path],
    tensors: Mapping[str, TensorLike],
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write a checkpoint archive atomically.

    Args:
        path: Destination file (``.vtck``).
        tensors: Named tensors; torch tensors are detached and moved to CPU.
        metadata: JSON-serialisable metadata block (configs, step, rng state).

    Returns:
        The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = canonical_json(metadata or {}).encode("utf-8")

    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(meta_bytes)), meta_bytes]
    chunks.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        array = _as_numpy(tensors[name])
        code = _dtype_code(array)
        data = array.astype(_DTYPES[code], copy=False).tobytes(order="C")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(struct.pack("<Q", len(data)))
        chunks.append(data)

    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp_path, path)
    logger.debug(f"Wrote archive {path} with {len(tensors)} tensors")
    return path


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.blob):
            raise CheckpointError(f"truncated archive: {self.path}")
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_archive(
    path: Union[str, Path],
    expected_shapes: Optional[Mapping[str, Sequence[int]]] = None,
) -> CheckpointArchive:
    """Read and validate a checkpoint archive.

    Args:
        path: Archive file.
        expected_shapes: Optional name -> shape map checked against the content.

    Returns:
        The decoded archive.

    Raises:
        CheckpointError: Missing file, bad magic/version, truncation or shape mismatch.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), path)

    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"not a checkpoint archive: {path}")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported archive version {version} in {path}")
    (meta_len,) = reader.unpack("<Q")
    try:
        metadata = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt metadata block in {path}: {e}") from e

    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for '{name}' in {path}")
        shape = reader.unpack(f"<{ndim}Q") if ndim else ()
        (nbytes,) = reader.unpack("<Q")
        dtype = _DTYPES[code]
        if nbytes != int(np.prod(shape, dtype=np.int64)) * dtype.itemsize:
            raise CheckpointError(f"size mismatch for tensor '{name}' in {path}")
        tensors[name] = np.frombuffer(reader.take(nbytes), dtype=dtype).reshape(shape).copy()

    if reader.offset != len(reader.blob):
        raise CheckpointError(f"trailing bytes after last tensor in {path}")

    for name, shape in (expected_shapes or {}).items():
        if name not in tensors:
            raise CheckpointError(f"tensor '{name}' missing from {path}")
        if tuple(tensors[name].shape) != tuple(shape):
            raise CheckpointError(
                f"tensor '{name}' has shape {tuple(tensors[name].shape)}, expected {tuple(shape)}"
            )

    return CheckpointArchive(metadata=metadata, tensors=tensors)


def module_tensors(module: torch.nn.Module, prefix: str) -> Dict[str, torch.Tensor]:
    """Flatten a module's state dict under ``prefix`` for :func:`save_archive`."""
    return {f"{prefix}{name}": value for name, value in module.state_dict().items()}


def load_module(module: torch.nn.Module, archive: CheckpointArchive, prefix: str) -> None:
    """Load ``prefix``-ed tensors into ``module``, validating names and shapes."""
    state = archive.state_dict(prefix)
    expected = module.state_dict()
    missing = sorted(set(expected) - set(state))
    unexpected = sorted(set(state) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f"state mismatch for '{prefix}': missing={missing[:5]} unexpected={unexpected[:5]}"
        )
    for name, value in state.items():
        if tuple(value.shape) != tuple(expected[name].shape):
            raise CheckpointError(
                f"'{prefix}{name}' has shape {tuple(value.shape)}, model expects {tuple(expected[name].shape)}"
            )
    module.load_state_dict({name: value.to(expected[name].dtype) for name, value in state.items()})
