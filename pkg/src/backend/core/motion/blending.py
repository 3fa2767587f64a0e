"""
SE(3) blend rule shared by node motions (basis combination) and Gaussian interpolation.

Translations combine linearly with the given weights. Rotations use a weighted quaternion
average after aligning every quaternion to the hemisphere of the largest-weight one, then
renormalize (identity if the average vanishes).
"""

from typing import Tuple

import torch

from src.backend.core.geometry.quaternion_ops import quat_normalize


def blend_se3(weights: torch.Tensor, quats: torch.Tensor,
              trans: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Blend K transforms per item.

    Args:
        weights: (..., K)
        quats: (..., K, 4) scalar-first unit quaternions
        trans: (..., K, 3)

    Returns:
        (quat (..., 4), translation (..., 3))
    """
    ref_index = weights.argmax(dim=-1, keepdim=True)
    ref = torch.gather(quats, -2, ref_index.unsqueeze(-1).expand(*ref_index.shape, 4))
    dots = (quats * ref).sum(dim=-1)
    signs = torch.where(dots < 0, -torch.ones_like(dots), torch.ones_like(dots))
    aligned = quats * signs.unsqueeze(-1)
    quat = quat_normalize((weights.unsqueeze(-1) * aligned).sum(dim=-2))
    translation = (weights.unsqueeze(-1) * trans).sum(dim=-2)
    return quat, translation
