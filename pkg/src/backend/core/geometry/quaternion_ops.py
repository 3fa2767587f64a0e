"""
Batched, differentiable quaternion kernels (torch, scalar-first).
"""

import torch


def quat_normalize(q: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    norm = q.norm(dim=-1, keepdim=True)
    identity = torch.zeros_like(q)
    identity[..., 0] = 1.0
    safe = torch.where(norm > eps, norm, torch.ones_like(norm))
    return torch.where(norm > eps, q / safe, identity)


def quat_multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], dim=-1)


def quat_to_rotmat(q: torch.Tensor) -> torch.Tensor:
    """(..., 4) unit quaternions -> (..., 3, 3) rotation matrices."""
    w, x, y, z = q.unbind(-1)
    return torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], dim=-1).reshape(q.shape[:-1] + (3, 3))


def se3_apply(q: torch.Tensor, t: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """R(q) p + t with broadcasting over leading dims."""
    rot = quat_to_rotmat(q)
    return (rot @ points.unsqueeze(-1)).squeeze(-1) + t


def se3_compose(q_a: torch.Tensor, t_a: torch.Tensor, q_b: torch.Tensor, t_b: torch.Tensor):
    """(a ∘ b): apply b first."""
    q = quat_normalize(quat_multiply(q_a, q_b))
    t = (quat_to_rotmat(q_a) @ t_b.unsqueeze(-1)).squeeze(-1) + t_a
    return q, t


def se3_inverse_apply(q: torch.Tensor, t: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """R(q)^T (p - t)."""
    rot = quat_to_rotmat(q)
    return (rot.transpose(-1, -2) @ (points - t).unsqueeze(-1)).squeeze(-1)
