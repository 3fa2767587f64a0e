"""
DPTH depth files.

Layout (little-endian):
    magic  4 bytes  b"DPTH"
    width  uint32
    height uint32
    flags  uint32   bit 0: a validity plane follows the values
    values float64[height * width], row-major
    valid  uint8[height * width]   (only when flag bit 0 is set)
"""

import struct
from pathlib import Path

import numpy as np

from src.backend.core.geometry import DepthMap
from .image_io import StorageError

MAGIC = b"DPTH"
HEADER = struct.Struct("<4sIII")
FLAG_VALIDITY = 1


def write_depth(path, depth: DepthMap) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = HEADER.pack(MAGIC, depth.width, depth.height, FLAG_VALIDITY)
    values = np.ascontiguousarray(depth.values, dtype="<f8").tobytes()
    valid = np.ascontiguousarray(depth.valid, dtype=np.uint8).tobytes()
    path.write_bytes(header + values + valid)
    return path


def read_depth(path) -> DepthMap:
    """
    Raises:
        DepthFormatError: On a bad magic, truncated payload or trailing bytes
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise DepthFormatError(f"{path}: file shorter than the DPTH header")
    magic, width, height, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DepthFormatError(f"{path}: bad magic {magic!r}")
    count = width * height
    expected = HEADER.size + 8 * count + (count if flags & FLAG_VALIDITY else 0)
    if len(data) != expected:
        raise DepthFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=HEADER.size).reshape(height, width)
    if flags & FLAG_VALIDITY:
        valid = np.frombuffer(data, dtype=np.uint8, count=count, offset=HEADER.size + 8 * count).reshape(height, width) > 0
        return DepthMap(values.astype(np.float64), valid)
    return DepthMap.from_array(values.astype(np.float64))


# CUSTOM EXCEPTIONS
class DepthFormatError(StorageError):
    """Malformed DPTH file."""
    pass
