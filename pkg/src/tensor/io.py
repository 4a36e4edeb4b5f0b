"""TNSR v1 tensor dump format.

    TNSR v1 <ndim> <extents...> <f32|f64>\\n
    <little-endian flat row-major data>

Used for checkpoints and golden files.
"""

from typing import BinaryIO

import numpy as np

from src.errors import DataError

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


def dump_tensor(t: np.ndarray, fh: BinaryIO) -> None:
    """Write t (float32 or float64) to an open binary file."""
    tag = "f32" if t.dtype == np.float32 else "f64"
    extents = " ".join(str(n) for n in t.shape)
    header = f"TNSR v1 {t.ndim}{' ' + extents if extents else ''} {tag}\n"
    fh.write(header.encode("ascii"))
    fh.write(np.ascontiguousarray(t, dtype=_DTYPES[tag]).tobytes())


def load_tensor(fh: BinaryIO) -> np.ndarray:
    """Read one tensor written by dump_tensor from the current file position."""
    header = fh.readline().decode("ascii", errors="replace").split()
    if len(header) < 4 or header[0] != "TNSR" or header[1] != "v1" or not header[2].isdigit():
        raise DataError(f"not a TNSR v1 header: {' '.join(header)!r}")

    ndim = int(header[2])
    if len(header) != 4 + ndim:
        raise DataError(f"TNSR header declares {ndim} extents, found {len(header) - 4}")
    extents = header[3:3 + ndim]
    if not all(n.isdigit() for n in extents):
        raise DataError(f"TNSR extents must be non-negative integers, got {extents}")
    shape = tuple(int(n) for n in extents)
    tag = header[-1]
    if tag not in _DTYPES:
        raise DataError(f"unknown TNSR element type {tag!r}")

    dtype = _DTYPES[tag]
    count = int(np.prod(shape, dtype=np.int64))
    raw = fh.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise DataError("truncated TNSR payload")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
