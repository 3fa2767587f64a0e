"""
Renderer settings and output types.
"""

from dataclasses import dataclass

import numpy as np
import torch
from pydantic import BaseModel, Field


class RenderSettings(BaseModel):
    """Splatting constants; fixed defaults keep renders bit-reproducible"""
    tile_size: int = Field(default=16, ge=1, description="Square tile edge in pixels")
    low_pass: float = Field(default=0.3, ge=0.0, description="Added to the diagonal of every 2D covariance (px^2)")
    opacity_clamp: float = Field(default=0.999, gt=0.0, lt=1.0, description="Upper clamp of per-pixel splat opacity")
    min_transmittance: float = Field(default=1e-4, gt=0.0, lt=1.0, description="Compositing stops below this transmittance")
    radius_sigmas: float = Field(default=3.0, gt=0.0, description="Tile binning radius in standard deviations")
    near: float = Field(default=0.01, gt=0.0, description="Gaussians with camera z at or below this are culled")
    threads: int = Field(default=1, ge=1, description="Worker threads across tiles")


@dataclass(frozen=True)
class Splat2D:
    """
    A projected Gaussian.

    Attributes:
        mean2d: (2,) pixel center
        cov2d: (2, 2) image covariance including the low-pass term
        depth: Camera-frame z
        opacity: α
        color: (3,) RGB for this view
    """

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov2d, dtype=np.float64)
        if not np.allclose(cov, cov.T):
            raise ValueError("2D covariance must be symmetric")
        if not self.depth > 0:
            raise ValueError(f"Splat depth must be positive, got {self.depth}")

    @property
    def conic(self) -> np.ndarray:
        """(a, b, c) of the inverse covariance [[a, b], [b, c]]."""
        (a, b), (_, c) = np.asarray(self.cov2d, dtype=np.float64)
        det = a * c - b * b
        return np.array([c / det, -b / det, a / det])


@dataclass
class RenderedImage:
    """
    Rendered frame as torch tensors (float64).

    Attributes:
        color: (H, W, 3) blended foreground plus (1 - alpha) · background
        alpha: (H, W) accumulated opacity in [0, 1]
        depth: (H, W) alpha-normalized expected depth, 0 where alpha vanishes
    """

    color: torch.Tensor
    alpha: torch.Tensor
    depth: torch.Tensor

    @property
    def height(self) -> int:
        return self.color.shape[0]

    @property
    def width(self) -> int:
        return self.color.shape[1]

    def numpy(self):
        """(color, alpha, depth) as detached numpy arrays."""
        return (self.color.detach().numpy(), self.alpha.detach().numpy(), self.depth.detach().numpy())
