"""
Real spherical harmonics for view-dependent Gaussian color (degrees 0-2).
"""

import numpy as np
import torch

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
]
MAX_SH_DEGREE = 2


def sh_basis_count(degree: int) -> int:
    return (degree + 1) ** 2


def rgb_to_sh_dc(rgb):
    return (rgb - 0.5) / SH_C0


def eval_sh(degree: int, sh: torch.Tensor, dirs: torch.Tensor) -> torch.Tensor:
    """
    Evaluate SH color.

    Args:
        degree: SH degree l (0..2)
        sh: (N, (l+1)^2, 3) coefficients
        dirs: (N, 3) unit view directions (camera center -> Gaussian)

    Returns:
        (N, 3) RGB, offset by 0.5 and clamped at 0
    """
    if degree > MAX_SH_DEGREE:
        raise ValueError(f"SH degree {degree} exceeds supported maximum {MAX_SH_DEGREE}")
    result = SH_C0 * sh[:, 0]
    if degree > 0:
        x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
        result = result - SH_C1 * y * sh[:, 1] + SH_C1 * z * sh[:, 2] - SH_C1 * x * sh[:, 3]
        if degree > 1:
            xx, yy, zz = x * x, y * y, z * z
            result = (result
                      + SH_C2[0] * x * y * sh[:, 4]
                      + SH_C2[1] * y * z * sh[:, 5]
                      + SH_C2[2] * (2.0 * zz - xx - yy) * sh[:, 6]
                      + SH_C2[3] * x * z * sh[:, 7]
                      + SH_C2[4] * (xx - yy) * sh[:, 8])
    return torch.clamp_min(result + 0.5, 0.0)


def sh_from_rgb(rgb: np.ndarray, degree: int) -> np.ndarray:
    """(N, 3) colors -> (N, (l+1)^2, 3) coefficients with only the DC band set."""
    rgb = np.asarray(rgb, dtype=np.float64)
    sh = np.zeros((rgb.shape[0], sh_basis_count(degree), 3))
    sh[:, 0] = rgb_to_sh_dc(rgb)
    return sh
