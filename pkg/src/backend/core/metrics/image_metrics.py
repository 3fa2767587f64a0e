"""
PSNR, SSIM and the masked bounding-box protocol.
"""

import logging
import math
from typing import Tuple

import numpy as np
from skimage.metrics import structural_similarity

from .metrics_schema import PSNR_CAP, ViewMetrics

logger = logging.getLogger(__name__)

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11


def _as_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    return image


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10·log10(1 / MSE) for images in [0, 1], capped at 99 dB."""
    mse = float(np.mean((_as_image(a) - _as_image(b)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """
    SSIM with an 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03, data range 1.
    Images smaller than the window are edge-padded to fit it.
    """
    a, b = _as_image(a), _as_image(b)
    pad_rows = max(0, SSIM_WINDOW - a.shape[0])
    pad_cols = max(0, SSIM_WINDOW - a.shape[1])
    if pad_rows or pad_cols:
        widths = ((pad_rows // 2, pad_rows - pad_rows // 2), (pad_cols // 2, pad_cols - pad_cols // 2), (0, 0))
        a = np.pad(a, widths, mode="edge")
        b = np.pad(b, widths, mode="edge")
    value = structural_similarity(a, b, data_range=1.0, channel_axis=-1, gaussian_weights=True,
                                  sigma=SSIM_SIGMA, use_sample_covariance=False, K1=0.01, K2=0.03)
    return float(np.clip(value, -1.0, 1.0))


def psnr_ssim(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """
    Args:
        a, b: (H, W) or (H, W, C) images in [0, 1]

    Returns:
        (psnr dB, ssim)

    Raises:
        ShapeMismatchError: If the shapes differ
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Image shapes differ: {a.shape} vs {b.shape}")
    return psnr(a, b), ssim(a, b)


def mask_bbox(mask: np.ndarray, margin_frac: float) -> Tuple[int, int, int, int]:
    """
    Tight mask bounds expanded by margin_frac · max(width, height) per side, clipped to the image.

    Returns:
        (row0, col0, row1, col1), end-exclusive

    Raises:
        EmptyMaskError: If the mask has no foreground pixel
    """
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("Object mask is empty")
    row0, row1 = int(rows[0]), int(rows[-1]) + 1
    col0, col1 = int(cols[0]), int(cols[-1]) + 1
    margin = int(round(margin_frac * max(row1 - row0, col1 - col0)))
    height, width = mask.shape
    return max(0, row0 - margin), max(0, col0 - margin), min(height, row1 + margin), min(width, col1 + margin)


def masked_bbox_eval(rendered: np.ndarray, gt_image: np.ndarray, gt_mask: np.ndarray,
                     margin_frac: float = 0.2, view: str = "view", frame: int = 0) -> ViewMetrics:
    """
    PSNR and SSIM on the crop around the dilated object bbox.

    Raises:
        EmptyMaskError: If the mask is empty
        ShapeMismatchError: If the images differ in shape
    """
    rendered, gt_image = np.asarray(rendered), np.asarray(gt_image)
    if rendered.shape != gt_image.shape or rendered.shape[:2] != np.asarray(gt_mask).shape:
        raise ShapeMismatchError(f"Shapes differ: rendered {rendered.shape}, gt {gt_image.shape}, "
                                 f"mask {np.asarray(gt_mask).shape}")
    row0, col0, row1, col1 = mask_bbox(gt_mask, margin_frac)
    p, s = psnr_ssim(rendered[row0:row1, col0:col1], gt_image[row0:row1, col0:col1])
    return ViewMetrics(view=view, frame=frame, psnr=p, ssim=s, bbox=(row0, col0, row1, col1))


# CUSTOM EXCEPTIONS
class MetricsError(Exception):
    """Base exception for evaluation errors."""
    pass

class ShapeMismatchError(MetricsError):
    """Compared images differ in shape."""
    pass

class EmptyMaskError(MetricsError):
    """The object mask has no foreground pixel."""
    pass
