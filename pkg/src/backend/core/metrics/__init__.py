"""
Image quality and trajectory metrics.
"""

from .metrics_schema import EvalSettings, ViewMetrics, TrackErrorStats, EvalReport, PSNR_CAP
from .image_metrics import (
    psnr,
    ssim,
    psnr_ssim,
    mask_bbox,
    masked_bbox_eval,
    MetricsError,
    ShapeMismatchError,
    EmptyMaskError,
)
from .track_metrics import track_error, IdMismatchError

__all__ = [
    "EvalSettings",
    "ViewMetrics",
    "TrackErrorStats",
    "EvalReport",
    "PSNR_CAP",
    "psnr",
    "ssim",
    "psnr_ssim",
    "mask_bbox",
    "masked_bbox_eval",
    "MetricsError",
    "ShapeMismatchError",
    "EmptyMaskError",
    "track_error",
    "IdMismatchError",
]
