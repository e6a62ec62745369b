"""
AFLD field files: raw float32 tensors with a small self-describing header.

Layout (all little-endian):
    magic    4 bytes  b"AFLD"
    version  u16
    rank     u16
    dims     rank x u32
    payload  prod(dims) x float32, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import torch

from boxtraj.errors import FieldFormatError

MAGIC = b"AFLD"
VERSION = 1
_HEADER = struct.Struct("<4sHH")
_PAYLOAD_DTYPE = np.dtype("<f4")


def encode_field(values: np.ndarray | torch.Tensor) -> bytes:
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    array = np.ascontiguousarray(values, dtype=_PAYLOAD_DTYPE)
    if array.ndim > 0xFFFF or any(dim > 0xFFFFFFFF for dim in array.shape):
        raise FieldFormatError(f"Shape {array.shape} does not fit the field header")
    header = _HEADER.pack(MAGIC, VERSION, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    return header + dims + array.tobytes(order="C")


def decode_field(data: bytes) -> np.ndarray:
    """
    Parse an AFLD blob into a float32 array.

    Raises:
        FieldFormatError: bad magic, unsupported version or wrong payload size
    """
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"Truncated header: {len(data)} bytes")
    magic, version, rank = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FieldFormatError(f"Unsupported field version {version}")
    offset = _HEADER.size + 4 * rank
    if len(data) < offset:
        raise FieldFormatError(f"Truncated dims for rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", data, _HEADER.size)
    expected = int(np.prod(dims, dtype=np.int64)) * _PAYLOAD_DTYPE.itemsize
    if len(data) - offset != expected:
        raise FieldFormatError(
            f"Payload is {len(data) - offset} bytes, dims {dims} need {expected}"
        )
    return np.frombuffer(data, dtype=_PAYLOAD_DTYPE, offset=offset).reshape(dims).copy()


def write_field(path: Path, values: np.ndarray | torch.Tensor) -> Path:
    path = Path(path)
    path.write_bytes(encode_field(values))
    return path


def read_field(path: Path) -> np.ndarray:
    return decode_field(Path(path).read_bytes())
