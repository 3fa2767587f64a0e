"""
Image files through Pillow: frames as PPM/PNG, masks as PGM.
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8-bit, rounding half up."""
    return np.floor(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_image(path, image: np.ndarray) -> Path:
    """Write an (H, W, 3) image in [0, 1]; the suffix picks the format (.ppm, .png)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)[..., :3]).save(path)
    return path


def read_image(path) -> np.ndarray:
    """(H, W, 3) float image in [0, 1]."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as e:
        logger.error(f"Cannot read image {path}: {e}")
        raise ImageFormatError(f"Cannot read image {path}: {e}")


def write_mask(path, mask: np.ndarray) -> Path:
    """Binary mask as an 8-bit PGM (0 / 255)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)).save(path)
    return path


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) >= 128
    except Exception as e:
        logger.error(f"Cannot read mask {path}: {e}")
        raise ImageFormatError(f"Cannot read mask {path}: {e}")


# CUSTOM EXCEPTIONS
class StorageError(Exception):
    """Base exception for on-disk format errors."""
    pass

class ImageFormatError(StorageError):
    """Image or mask file is unreadable."""
    pass
