"""Flat binary tensor blobs: 16-byte header of 4 little-endian uint32 dims,
then row-major float64 payload. Used for checkpoints and golden files."""

import struct

import numpy as np

HEADER_FMT = "<4I"
HEADER_SIZE = struct.calcsize(HEADER_FMT)


def write_blob(path, array):
    """Write an array of up to 4 dims; missing leading dims are stored as 1."""
    arr = np.ascontiguousarray(array, dtype=np.float64)
    if arr.ndim > 4:
        raise ValueError(f"blob arrays are at most 4-D, got {arr.ndim}-D")
    dims = (1,) * (4 - arr.ndim) + arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack(HEADER_FMT, *dims))
        f.write(arr.astype("<f8").tobytes())


def read_blob(path):
    """Read a blob back as a 4-D float64 array."""
    with open(path, "rb") as f:
        dims = struct.unpack(HEADER_FMT, f.read(HEADER_SIZE))
        n = int(np.prod(dims))
        data = np.frombuffer(f.read(8 * n), dtype="<f8")
    if data.size != n:
        raise ValueError(f"blob {path}: expected {n} values, found {data.size}")
    return data.reshape(dims).astype(np.float64)
