"""
First-order EWA projection of 3D Gaussians to image-space splats.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from src.backend.core.geometry import BehindCameraError, Camera
from .render_schema import RenderSettings, Splat2D

DTYPE = torch.float64


@dataclass
class ProjectedSplats:
    """
    Batched projection results (torch, differentiable except `radius` and `valid`).

    Attributes:
        means2d: (N, 2) pixel centers
        cov2d: (N, 2, 2) covariances including the low-pass term
        conics: (N, 3) inverse covariance entries (a, b, c)
        depths: (N,) camera-frame z
        cam_points: (N, 3) camera-frame centers
        radius: (N,) binning radius in pixels
        valid: (N,) not culled
    """

    means2d: torch.Tensor
    cov2d: torch.Tensor
    conics: torch.Tensor
    depths: torch.Tensor
    cam_points: torch.Tensor
    radius: torch.Tensor
    valid: torch.Tensor


def camera_tensors(cam: Camera):
    """World-to-camera rotation (3, 3) and translation (3,) as float64 tensors."""
    w2c = cam.world_to_camera
    return (torch.as_tensor(np.array(w2c.rotation_matrix), dtype=DTYPE),
            torch.as_tensor(np.array(w2c.translation), dtype=DTYPE))


def project_gaussians(means: torch.Tensor, covs: torch.Tensor, cam: Camera,
                      settings: Optional[RenderSettings] = None) -> ProjectedSplats:
    """
    Σ′ = J·W·Σ·Wᵀ·Jᵀ + low_pass·I, with J the perspective Jacobian at the camera-frame center.

    Args:
        means: (N, 3) world means
        covs: (N, 3, 3) world covariances
        cam: Camera
        settings: RenderSettings (low-pass, near plane, binning radius)

    Returns:
        ProjectedSplats; Gaussians at z <= near are flagged invalid and get safe placeholder values
    """
    settings = settings or RenderSettings()
    rot, trans = camera_tensors(cam)
    cam_points = means @ rot.T + trans
    x, y, z = cam_points.unbind(-1)
    valid = (z > settings.near) & torch.isfinite(cam_points).all(dim=-1)
    safe_z = torch.where(valid, z, torch.ones_like(z))

    u = cam.fx * x / safe_z + cam.cx
    v = cam.fy * y / safe_z + cam.cy
    means2d = torch.stack([u, v], dim=-1)

    zeros = torch.zeros_like(z)
    jac = torch.stack([
        torch.stack([cam.fx / safe_z, zeros, -cam.fx * x / safe_z ** 2], dim=-1),
        torch.stack([zeros, cam.fy / safe_z, -cam.fy * y / safe_z ** 2], dim=-1),
    ], dim=-2)
    cov_cam = rot @ covs @ rot.T
    cov2d = jac @ cov_cam @ jac.transpose(-1, -2)
    cov2d = cov2d + settings.low_pass * torch.eye(2, dtype=DTYPE)
    cov2d = torch.where(valid[:, None, None], cov2d, torch.eye(2, dtype=DTYPE).expand_as(cov2d))

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conics = torch.stack([c / det, -b / det, a / det], dim=-1)

    with torch.no_grad():
        mid = 0.5 * (a + c)
        lam_max = mid + torch.sqrt(torch.clamp(mid * mid - det, min=0.0))
        radius = settings.radius_sigmas * torch.sqrt(lam_max)
        valid = valid & (det > 0)

    return ProjectedSplats(means2d, cov2d, conics, z, cam_points, radius, valid)


def project_gaussian(mean_t: np.ndarray, cov_t: np.ndarray, cam: Camera,
                     settings: Optional[RenderSettings] = None,
                     opacity: float = 1.0, color=(1.0, 1.0, 1.0)) -> Splat2D:
    """
    Project one Gaussian.

    Raises:
        BehindCameraError: If the center is not in front of the near plane
    """
    settings = settings or RenderSettings()
    proj = project_gaussians(torch.as_tensor(np.asarray(mean_t, dtype=np.float64)[None]),
                             torch.as_tensor(np.asarray(cov_t, dtype=np.float64)[None]), cam, settings)
    if not bool(proj.valid[0]):
        raise BehindCameraError(f"Gaussian at {mean_t} is behind the camera (z = {float(proj.depths[0])})")
    return Splat2D(
        mean2d=proj.means2d[0].detach().numpy(),
        cov2d=proj.cov2d[0].detach().numpy(),
        depth=float(proj.depths[0]),
        opacity=float(opacity),
        color=np.asarray(color, dtype=np.float64),
    )
