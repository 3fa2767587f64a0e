"""
Canonical Gaussian primitives, rigid deformation and SH color.
"""

from .gaussians import (
    Gaussian,
    CanonicalScene,
    build_covariance,
    deform_gaussian,
    covariance_from_factors,
    deform_gaussians,
    SceneError,
    NonPositiveScaleError,
    InvalidOpacityError,
)
from .sh import eval_sh, sh_basis_count, sh_from_rgb, rgb_to_sh_dc

__all__ = [
    "Gaussian",
    "CanonicalScene",
    "build_covariance",
    "deform_gaussian",
    "covariance_from_factors",
    "deform_gaussians",
    "SceneError",
    "NonPositiveScaleError",
    "InvalidOpacityError",
    "eval_sh",
    "sh_basis_count",
    "sh_from_rgb",
    "rgb_to_sh_dc",
]
