"""Reader and writer for the little-endian ``.flo`` flow file format.

Layout: float32 magic ``202021.25``, int32 width, int32 height, then
``height * width * 2`` float32 values interleaved ``(u, v)`` in row-major
order.  Malformed files raise a subclass of :class:`FloFormatError` that
identifies what is wrong.
"""

import struct

import numpy as np

__all__ = [
    "FLO_MAGIC",
    "FloFormatError",
    "FloMagicError",
    "FloTruncatedError",
    "FloDimensionError",
    "read_flo",
    "write_flo",
]

FLO_MAGIC = 202021.25


class FloFormatError(ValueError):
    """Base class for malformed flow files."""


class FloMagicError(FloFormatError):
    """The magic number does not match."""


class FloTruncatedError(FloFormatError):
    """The file ends before the declared payload."""


class FloDimensionError(FloFormatError):
    """The declared width or height is not a positive sane value."""


# guards against reading garbage headers as multi-terabyte allocations
_MAX_DIM = 10**6


def read_flo(path):
    """Load a ``.flo`` file as a float32 ``(H, W, 2)`` array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12:
        raise FloTruncatedError(f"{path}: header needs 12 bytes, file has {len(data)}")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise FloMagicError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    if w <= 0 or h <= 0 or w > _MAX_DIM or h > _MAX_DIM:
        raise FloDimensionError(f"{path}: implausible dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(data) < need:
        raise FloTruncatedError(
            f"{path}: payload needs {need} bytes for {w}x{h}, file has {len(data)}"
        )
    flat = np.frombuffer(data[12:need], dtype="<f4")
    return flat.reshape(h, w, 2).astype(np.float32)


def write_flo(path, flow):
    """Write an ``(H, W, 2)`` array as a ``.flo`` file."""
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[-1] != 2:
        raise ValueError(f"expected (H, W, 2) flow, got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(flow.astype("<f4").tobytes())
