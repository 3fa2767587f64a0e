"""
Canonical Gaussian primitives and their rigid deformation.
Covariance is always stored factored as (scale, rotation); Σ = R diag(scale²) Rᵀ.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch

from src.backend.core.geometry import SE3Transform, quat_to_matrix
from src.backend.core.geometry.quaternion_ops import quat_normalize, quat_to_rotmat


@dataclass(frozen=True)
class Gaussian:
    """One canonical Gaussian G(μ₀, Σ₀, α, c)."""

    mean0: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    sh_color: np.ndarray

    def __post_init__(self):
        scale = np.asarray(self.scale, dtype=np.float64)
        if scale.shape != (3,) or not np.all(scale > 0):
            raise NonPositiveScaleError(f"Scales must be three positive values, got {scale}")
        if not 0.0 < self.opacity <= 1.0:
            raise InvalidOpacityError(f"Opacity must lie in (0, 1], got {self.opacity}")
        rotation = np.asarray(self.rotation, dtype=np.float64)
        object.__setattr__(self, "rotation", rotation / np.linalg.norm(rotation))
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "mean0", np.asarray(self.mean0, dtype=np.float64))
        object.__setattr__(self, "sh_color", np.asarray(self.sh_color, dtype=np.float64))

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh_color.shape[0]))) - 1

    @property
    def covariance(self) -> np.ndarray:
        return build_covariance(self.scale, self.rotation)


@dataclass
class CanonicalScene:
    """
    Gaussians at the canonical frame, stored as parallel arrays.

    Attributes:
        means: (N, 3) canonical means μ₀
        scales: (N, 3) positive extents
        rotations: (N, 4) scalar-first quaternions
        opacities: (N,) values in (0, 1]
        sh: (N, (l+1)^2, 3) SH coefficients
        canonical_frame: Frame index holding the undeformed Gaussians
        background: RGB background color
        source_ids: (N,) id of the trajectory each Gaussian was born from
    """

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    canonical_frame: int = 0
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    source_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = self.means.shape[0]
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(n)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(n, -1, 3)
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        if self.source_ids is None:
            self.source_ids = np.arange(n)
        self.source_ids = np.asarray(self.source_ids, dtype=np.int64).reshape(n)
        if np.any(self.scales <= 0):
            raise NonPositiveScaleError("All Gaussian scales must be positive")
        if np.any((self.opacities <= 0) | (self.opacities > 1)):
            raise InvalidOpacityError("All opacities must lie in (0, 1]")

    @property
    def num_gaussians(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    def validate(self, num_frames: int) -> None:
        """Check invariants that depend on the sequence length."""
        if not 0 <= self.canonical_frame < num_frames:
            raise SceneError(f"Canonical frame {self.canonical_frame} outside sequence of {num_frames} frames")
        if self.num_gaussians == 0:
            raise SceneError("Scene has no Gaussians to render")

    def gaussian(self, index: int) -> Gaussian:
        return Gaussian(self.means[index], self.scales[index], self.rotations[index],
                        float(self.opacities[index]), self.sh[index])

    @classmethod
    def from_gaussians(cls, gaussians: List[Gaussian], canonical_frame: int = 0,
                       background=(0.0, 0.0, 0.0)) -> "CanonicalScene":
        if not gaussians:
            raise SceneError("Cannot build a scene from an empty Gaussian list")
        degrees = {g.sh_degree for g in gaussians}
        if len(degrees) != 1:
            raise SceneError(f"Mixed SH degrees {sorted(degrees)}")
        return cls(
            means=np.stack([g.mean0 for g in gaussians]),
            scales=np.stack([g.scale for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            opacities=np.array([g.opacity for g in gaussians]),
            sh=np.stack([g.sh_color for g in gaussians]),
            canonical_frame=canonical_frame,
            background=np.asarray(background, dtype=np.float64),
        )

    def covariances(self) -> np.ndarray:
        rot = quat_to_matrix(self.rotations / np.linalg.norm(self.rotations, axis=1, keepdims=True))
        return rot @ (self.scales[:, :, None] ** 2 * np.swapaxes(rot, 1, 2))


def build_covariance(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """
    Σ = R·diag(scale²)·Rᵀ.

    Raises:
        NonPositiveScaleError: If any scale component is <= 0
    """
    scale = np.asarray(scale, dtype=np.float64)
    if not np.all(scale > 0):
        raise NonPositiveScaleError(f"Scales must be positive, got {scale}")
    rotation = np.asarray(rotation, dtype=np.float64)
    rot = quat_to_matrix(rotation / np.linalg.norm(rotation))
    return rot @ np.diag(scale ** 2) @ rot.T


def deform_gaussian(g: Gaussian, transform: SE3Transform) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply a rigid transform to one Gaussian.

    Returns:
        (mean_t, Σ_t) with mean_t = R μ₀ + t and Σ_t = R Σ₀ Rᵀ; opacity and SH are untouched
    """
    rot = transform.rotation_matrix
    return transform.apply(g.mean0), rot @ g.covariance @ rot.T


def covariance_from_factors(scales: torch.Tensor, quats: torch.Tensor) -> torch.Tensor:
    """Batched differentiable Σ₀ for (N, 3) scales and (N, 4) quaternions."""
    rot = quat_to_rotmat(quat_normalize(quats))
    return rot @ torch.diag_embed(scales * scales) @ rot.transpose(-1, -2)


def deform_gaussians(means0: torch.Tensor, covs0: torch.Tensor,
                     quats_t: torch.Tensor, trans_t: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Batched form of deform_gaussian with per-Gaussian transforms (N, 4), (N, 3)."""
    rot = quat_to_rotmat(quats_t)
    means_t = (rot @ means0.unsqueeze(-1)).squeeze(-1) + trans_t
    covs_t = rot @ covs0 @ rot.transpose(-1, -2)
    return means_t, covs_t


# CUSTOM EXCEPTIONS
class SceneError(Exception):
    """Base exception for scene errors."""
    pass

class NonPositiveScaleError(SceneError):
    """A Gaussian scale component is not positive."""
    pass

class InvalidOpacityError(SceneError):
    """Opacity outside (0, 1]."""
    pass
