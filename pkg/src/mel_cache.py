"""
Little-endian binary blobs for cached mels and checkpoint tensors.

Mel cache (.sgvc): magic "SGVC", version u32, rows u32, cols u32, then rows * cols
float32 values in row-major order.

Tensor archive (.sgva): magic "SGVC", version u32, entry count u32, then per entry the
name length u32, UTF-8 name, ndim u32, ndim dims u32 and the float32 values. Tensors of
any dtype are stored as float32 and cast back by the reader's caller.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

from .errors import IntegrityError, SchemaError
from .features import MelSpectrogram

MAGIC = b"SGVC"
FORMAT_VERSION = 1
MEL_SUFFIX = ".sgvc"
ARCHIVE_SUFFIX = ".sgva"

_MEL_HEADER = struct.Struct("<4sIII")
_ARCHIVE_HEADER = struct.Struct("<4sII")
_U32 = struct.Struct("<I")


def write_mel_cache(mel: MelSpectrogram, path: str | Path) -> Path:
    rows, cols = mel.values.shape
    payload = _MEL_HEADER.pack(MAGIC, FORMAT_VERSION, rows, cols) + mel.values.astype("<f4").tobytes(order="C")
    return atomic_write_bytes(Path(path), payload)


def read_mel_cache(path: str | Path) -> MelSpectrogram:
    data = Path(path).read_bytes()
    if len(data) < _MEL_HEADER.size:
        raise IntegrityError(f"{path}: truncated header")
    magic, version, rows, cols = _MEL_HEADER.unpack_from(data)
    _check_magic_and_version(path, magic, version)
    expected = _MEL_HEADER.size + rows * cols * 4
    if len(data) != expected:
        raise IntegrityError(f"{path}: expected {expected} bytes for a {rows}x{cols} mel, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_MEL_HEADER.size).reshape(rows, cols)
    return MelSpectrogram(values.astype(np.float32))


def write_tensor_archive(tensors: Mapping[str, np.ndarray | torch.Tensor], path: str | Path) -> Path:
    chunks = [_ARCHIVE_HEADER.pack(MAGIC, FORMAT_VERSION, len(tensors))]
    for name, tensor in tensors.items():
        array = tensor.detach().cpu().numpy() if isinstance(tensor, torch.Tensor) else np.asarray(tensor)
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(int(dim)) for dim in array.shape)
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return atomic_write_bytes(Path(path), b"".join(chunks))


def read_tensor_archive(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _ARCHIVE_HEADER.size:
        raise IntegrityError(f"{path}: truncated header")
    magic, version, count = _ARCHIVE_HEADER.unpack_from(data)
    _check_magic_and_version(path, magic, version)
    offset = _ARCHIVE_HEADER.size
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_length,) = _U32.unpack_from(data, offset)
            offset += _U32.size
            name = data[offset:offset + name_length].decode("utf-8")
            offset += name_length
            (ndim,) = _U32.unpack_from(data, offset)
            offset += _U32.size
            shape = tuple(_U32.unpack_from(data, offset + index * _U32.size)[0] for index in range(ndim))
            offset += ndim * _U32.size
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            end = offset + size * 4
            if end > len(data):
                raise IntegrityError(f"{path}: tensor {name!r} is truncated")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape).copy()
            offset = end
    except (struct.error, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{path}: corrupt archive ({exc})") from exc
    if offset != len(data):
        raise IntegrityError(f"{path}: {len(data) - offset} unexpected trailing bytes")
    return tensors


def atomic_write_bytes(path: Path, payload: bytes) -> Path:
    """Write next to the destination and rename, so readers never see partial files."""
    path.parent.mkdir(parents=True, exist_ok=True)
    descriptor, temp_name = tempfile.mkstemp(prefix=f".{path.name}-", dir=path.parent)
    try:
        with os.fdopen(descriptor, "wb") as handle:
            handle.write(payload)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise
    return path


def _check_magic_and_version(path: str | Path, magic: bytes, version: int) -> None:
    if magic != MAGIC:
        raise IntegrityError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SchemaError(f"{path}: format version {version} is not supported (expected {FORMAT_VERSION})")
