"""
Least-squares rigid alignment (Kabsch, no scaling).
"""

import logging

import numpy as np

from src.backend.core.geometry import SE3Transform

logger = logging.getLogger(__name__)

RANK_TOL = 1e-9


def procrustes(src: np.ndarray, dst: np.ndarray) -> SE3Transform:
    """
    Rigid transform T minimizing Σ ‖T(src_i) − dst_i‖².

    Fewer than three points, or a rank-deficient (collinear) source or target,
    falls back to identity rotation with the centroid difference as translation.

    Args:
        src: (N, 3) source points
        dst: (N, 3) target points

    Returns:
        SE3Transform mapping src onto dst

    Raises:
        EmptyInputError: If no point pairs are given
        ValueError: If counts differ
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise ValueError(f"Point counts differ: {src.shape[0]} vs {dst.shape[0]}")
    if src.shape[0] == 0:
        raise EmptyInputError("Procrustes needs at least one point pair")

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    if src.shape[0] < 3:
        return SE3Transform(np.array([1.0, 0.0, 0.0, 0.0]), dst_mean - src_mean)

    src_c = src - src_mean
    dst_c = dst - dst_mean
    if _rank(src_c) < 2 or _rank(dst_c) < 2:
        return SE3Transform(np.array([1.0, 0.0, 0.0, 0.0]), dst_mean - src_mean)

    cross = dst_c.T @ src_c
    u, _, vt = np.linalg.svd(cross)
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    rotation = u @ np.diag([1.0, 1.0, d]) @ vt
    return SE3Transform.from_matrix(rotation, dst_mean - rotation @ src_mean)


def _rank(centered: np.ndarray) -> int:
    # tolerance is relative to the largest singular value
    singular = np.linalg.svd(centered, compute_uv=False)
    if singular[0] == 0.0:
        return 0
    return int(np.sum(singular > RANK_TOL * singular[0]))


def alignment_residual(transform: SE3Transform, src: np.ndarray, dst: np.ndarray) -> float:
    """Sum of squared distances after applying `transform` to `src`."""
    diff = transform.apply(np.asarray(src, dtype=np.float64)) - np.asarray(dst, dtype=np.float64)
    return float(np.sum(diff * diff))


# CUSTOM EXCEPTIONS
class InitializationError(Exception):
    """Base exception for initialization errors."""
    pass

class EmptyInputError(InitializationError):
    """Nothing to align or cluster."""
    pass

class DegenerateInputError(InitializationError):
    """Input too uniform to yield the requested number of clusters."""
    pass
