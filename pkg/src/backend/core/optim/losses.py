"""
Reconstruction losses and the generalized ARAP regularizer.
"""

from typing import Dict, Optional

import torch
import torch.nn.functional as F

from src.backend.core.geometry.quaternion_ops import se3_inverse_apply
from src.backend.core.render import RenderedImage
from .optim_schema import LossConfig

DTYPE = torch.float64
DEADZONE = 1e-10


def _deadzone_abs(x: torch.Tensor) -> torch.Tensor:
    """|x| with exact zeros (and zero subgradient) below the deadzone."""
    small = x.abs() < DEADZONE
    return torch.where(small, torch.zeros_like(x), x.abs())


def _deadzone_norm(v: torch.Tensor) -> torch.Tensor:
    """Euclidean norm over the last axis; exact zero with zero gradient below the deadzone."""
    sq = (v * v).sum(dim=-1)
    small = sq < DEADZONE ** 2
    safe = torch.where(small, torch.ones_like(sq), sq)
    return torch.where(small, torch.zeros_like(sq), torch.sqrt(safe))


def arap_loss(pos_t: torch.Tensor, pos_u: torch.Tensor,
              quats_t: torch.Tensor, trans_t: torch.Tensor,
              quats_u: torch.Tensor, trans_u: torch.Tensor,
              pairs: torch.Tensor, w1: float = 1.0, w2: float = 1.0,
              reduction: str = "sum") -> torch.Tensor:
    """
    Rigidity between frames t and u over node pairs (i, j):

        w1 Σ | ‖x_i^t − x_j^t‖ − ‖x_i^u − x_j^u‖ |  +  w2 Σ ‖ (T_j^t)⁻¹ x_i^t − (T_j^u)⁻¹ x_i^u ‖

    Args:
        pos_t, pos_u: (n, 3) node positions at t and u
        quats_t, trans_t, quats_u, trans_u: (n, 4), (n, 3) node transforms
        pairs: (P, 2) node index pairs
        reduction: "sum" or "mean" over pairs

    Returns:
        Scalar tensor
    """
    if pairs.numel() == 0:
        return pos_t.sum() * 0.0
    i, j = pairs[:, 0], pairs[:, 1]
    dist_t = _deadzone_norm(pos_t[i] - pos_t[j])
    dist_u = _deadzone_norm(pos_u[i] - pos_u[j])
    stretch = _deadzone_abs(dist_t - dist_u)

    local_t = se3_inverse_apply(quats_t[j], trans_t[j], pos_t[i])
    local_u = se3_inverse_apply(quats_u[j], trans_u[j], pos_u[i])
    drift = _deadzone_norm(local_t - local_u)

    per_pair = w1 * stretch + w2 * drift
    return per_pair.mean() if reduction == "mean" else per_pair.sum()


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    coords = torch.arange(size, dtype=DTYPE) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return g[:, None] @ g[None, :]


def ssim_map(img1: torch.Tensor, img2: torch.Tensor, window_size: int = 11) -> torch.Tensor:
    """
    Per-pixel SSIM of two (H, W, C) images in [0, 1], averaged over channels.

    Gaussian window (σ = 1.5), zero padding, constants (0.01)², (0.03)².
    """
    channels = img1.shape[-1]
    x = img1.permute(2, 0, 1)[None]
    y = img2.permute(2, 0, 1)[None]
    window = _gaussian_window(window_size).expand(channels, 1, window_size, window_size).contiguous()
    pad = window_size // 2

    def blur(z):
        return F.conv2d(z, window, padding=pad, groups=channels)

    mu_x, mu_y = blur(x), blur(y)
    sigma_x = blur(x * x) - mu_x ** 2
    sigma_y = blur(y * y) - mu_y ** 2
    sigma_xy = blur(x * y) - mu_x * mu_y
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    value = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (sigma_x + sigma_y + c2))
    return value[0].mean(dim=0)


def render_losses(rendered: RenderedImage, gt_image: torch.Tensor, gt_mask: torch.Tensor,
                  gt_depth: torch.Tensor, gt_depth_valid: torch.Tensor,
                  track_pred: Optional[torch.Tensor] = None, track_obs: Optional[torch.Tensor] = None,
                  config: Optional[LossConfig] = None) -> Dict[str, torch.Tensor]:
    """
    Per-term image losses.

    Args:
        rendered: Rendered frame
        gt_image: (H, W, 3)
        gt_mask: (H, W) binary object mask
        gt_depth: (H, W) depth values
        gt_depth_valid: (H, W) depth validity
        track_pred: (M, 2) projected centers of Gaussians with a masked 2D observation
        track_obs: (M, 2) those observations
        config: LossConfig (ssim_weight)

    Returns:
        {"rgb", "mask", "depth", "track2d"} scalar tensors

    Raises:
        ShapeMismatchError: If any input disagrees with the rendered resolution
    """
    config = config or LossConfig()
    height, width = rendered.alpha.shape
    gt_image = torch.as_tensor(gt_image, dtype=DTYPE)
    gt_mask = torch.as_tensor(gt_mask, dtype=DTYPE)
    gt_depth = torch.as_tensor(gt_depth, dtype=DTYPE)
    gt_depth_valid = torch.as_tensor(gt_depth_valid, dtype=torch.bool)
    expected = {"gt_image": (height, width, 3), "gt_mask": (height, width),
                "gt_depth": (height, width), "gt_depth_valid": (height, width)}
    for name, tensor in (("gt_image", gt_image), ("gt_mask", gt_mask), ("gt_depth", gt_depth),
                         ("gt_depth_valid", gt_depth_valid)):
        if tuple(tensor.shape) != expected[name]:
            raise ShapeMismatchError(f"{name} has shape {tuple(tensor.shape)}, expected {expected[name]}")
    if tuple(rendered.color.shape) != (height, width, 3):
        raise ShapeMismatchError(f"Rendered color has shape {tuple(rendered.color.shape)}")

    zero = rendered.alpha.sum() * 0.0
    inside = gt_mask > 0.5
    if inside.any():
        l1 = (rendered.color - gt_image).abs().mean(dim=-1)[inside].mean()
        dssim = (1.0 - ssim_map(rendered.color, gt_image)[inside].mean()) / 2.0
        rgb = (1.0 - config.ssim_weight) * l1 + config.ssim_weight * dssim
    else:
        rgb = zero

    mask = (rendered.alpha - gt_mask).abs().mean()

    depth_sel = inside & gt_depth_valid
    depth = (rendered.depth - gt_depth).abs()[depth_sel].mean() if depth_sel.any() else zero

    if track_pred is not None and track_obs is not None and track_pred.shape[0] > 0:
        if track_pred.shape != track_obs.shape:
            raise ShapeMismatchError(f"Track predictions {tuple(track_pred.shape)} vs observations {tuple(track_obs.shape)}")
        track2d = (track_pred - torch.as_tensor(track_obs, dtype=DTYPE)).norm(dim=-1).mean()
    else:
        track2d = zero

    return {"rgb": rgb, "mask": mask, "depth": depth, "track2d": track2d}


def total_loss(terms: Dict[str, torch.Tensor], config: LossConfig) -> torch.Tensor:
    """Dot product of the λ vector with the term vector."""
    weights = config.weights()
    return sum(weights[name] * value for name, value in terms.items() if name in weights)


def check_finite(terms: Dict[str, torch.Tensor]) -> None:
    """
    Raises:
        NonFiniteLossError: Naming the first non-finite term
    """
    for name, value in terms.items():
        if not torch.isfinite(value).all():
            raise NonFiniteLossError(name, float(value.detach()))


# CUSTOM EXCEPTIONS
class OptimizationError(Exception):
    """Base exception for optimization errors."""
    pass

class ShapeMismatchError(OptimizationError):
    """Loss inputs disagree in shape."""
    pass

class NonFiniteLossError(OptimizationError):
    """A loss term became NaN or infinite."""

    def __init__(self, term: str, value: float):
        self.term = term
        super().__init__(f"Loss term '{term}' is not finite ({value})")
