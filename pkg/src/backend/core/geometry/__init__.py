"""
Rigid transforms, pinhole cameras and depth maps.
"""

from .se3 import (
    SE3Transform,
    GeometryError,
    InvalidRotationError,
    compose,
    invert,
    quat_multiply,
    quat_to_matrix,
    matrix_to_quat,
    axis_angle_to_quat,
)
from .camera import (
    Camera,
    DepthMap,
    project_point,
    unproject_pixel,
    InvalidCameraError,
    BehindCameraError,
    InvalidDepthError,
    OutOfBoundsError,
)

__all__ = [
    "SE3Transform",
    "GeometryError",
    "InvalidRotationError",
    "compose",
    "invert",
    "quat_multiply",
    "quat_to_matrix",
    "matrix_to_quat",
    "axis_angle_to_quat",
    "Camera",
    "DepthMap",
    "project_point",
    "unproject_pixel",
    "InvalidCameraError",
    "BehindCameraError",
    "InvalidDepthError",
    "OutOfBoundsError",
]
