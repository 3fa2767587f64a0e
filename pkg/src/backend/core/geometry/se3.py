"""
Rigid transforms in SE(3).
Quaternions are stored scalar-first (w, x, y, z), unit norm, on the w >= 0 hemisphere.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy.spatial.transform import Rotation


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of (..., 4) scalar-first quaternions."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) scalar-first quaternions."""
    q = np.asarray(q, dtype=np.float64)
    flat = q.reshape(-1, 4)
    mats = Rotation.from_quat(np.roll(flat, -1, axis=-1)).as_matrix()
    return mats.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(matrix: np.ndarray) -> np.ndarray:
    """Scalar-first quaternions (w >= 0) for (..., 3, 3) rotation matrices."""
    matrix = np.asarray(matrix, dtype=np.float64)
    flat = matrix.reshape(-1, 3, 3)
    quats = np.roll(Rotation.from_matrix(flat).as_quat(), 1, axis=-1)
    quats = np.where(quats[:, :1] < 0, -quats, quats)
    return quats.reshape(matrix.shape[:-2] + (4,))


def axis_angle_to_quat(axis: np.ndarray, angle: float) -> np.ndarray:
    """Scalar-first quaternion for a rotation of `angle` radians about `axis`."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


@dataclass(frozen=True)
class SE3Transform:
    """Immutable rigid transform x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=np.float64).reshape(4)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or norm < 1e-12:
            raise InvalidRotationError(f"Quaternion {q} cannot be normalized")
        if not np.all(np.isfinite(t)):
            raise InvalidRotationError(f"Translation {t} is not finite")
        q = q / norm
        if q[0] < 0:
            q = -q
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "SE3Transform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, rotation_matrix: np.ndarray, translation: np.ndarray) -> "SE3Transform":
        return cls(matrix_to_quat(rotation_matrix), translation)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "SE3Transform":
        return cls(axis_angle_to_quat(axis, angle), translation)

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        out = np.eye(4)
        out[:3, :3] = self.rotation_matrix
        out[:3, 3] = self.translation
        return out

    def compose(self, other: "SE3Transform") -> "SE3Transform":
        """self ∘ other: apply `other` first."""
        return SE3Transform(
            quat_multiply(self.rotation, other.rotation),
            self.rotation_matrix @ other.translation + self.translation,
        )

    def inverse(self) -> "SE3Transform":
        conj = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return SE3Transform(conj, -(self.rotation_matrix.T @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation_matrix.T + self.translation

    def is_close(self, other: "SE3Transform", atol: float = 1e-9) -> bool:
        # q and -q are the same rotation
        rot_ok = min(np.abs(self.rotation - other.rotation).max(),
                     np.abs(self.rotation + other.rotation).max()) <= atol
        return bool(rot_ok and np.abs(self.translation - other.translation).max() <= atol)

    def to_dict(self) -> Dict[str, Any]:
        return {"quat": self.rotation.tolist(), "trans": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SE3Transform":
        return cls(np.asarray(data["quat"]), np.asarray(data["trans"]))


def compose(a: SE3Transform, b: SE3Transform) -> SE3Transform:
    """a ∘ b."""
    return a.compose(b)


def invert(a: SE3Transform) -> SE3Transform:
    return a.inverse()


# CUSTOM EXCEPTIONS
class GeometryError(Exception):
    """Base exception for geometry errors."""
    pass

class InvalidRotationError(GeometryError):
    """Quaternion or translation cannot form a valid transform."""
    pass
