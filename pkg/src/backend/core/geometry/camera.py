"""
Pinhole cameras and z-depth maps.
Pixel coordinate (u, v) addresses column u, row v; integer coordinates are pixel sample positions.
Depth is camera-frame z, not ray length.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .se3 import GeometryError, SE3Transform


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a world-from-camera pose (x right, y down, z forward)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: SE3Transform

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidCameraError(f"Focal lengths must be positive, got ({self.fx}, {self.fy})")
        if self.width < 1 or self.height < 1:
            raise InvalidCameraError(f"Resolution must be at least 1x1, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidCameraError(
                f"Principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @classmethod
    def look_at(cls, eye, target, up, fx: float, fy: float, cx: float, cy: float,
                width: int, height: int) -> "Camera":
        """
        Build a camera at `eye` looking at `target`.

        Args:
            eye: Camera center in world coordinates
            target: Point the optical axis passes through
            up: Approximate world up direction (image y points away from it)

        Returns:
            Camera with the corresponding world-from-camera pose
        """
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=1)
        return cls(fx, fy, cx, cy, width, height, SE3Transform.from_matrix(rotation, eye))

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.width, self.height

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.pose.translation)

    @property
    def world_to_camera(self) -> SE3Transform:
        return self.pose.inverse()

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_camera_frame(self, points: np.ndarray) -> np.ndarray:
        return self.world_to_camera.apply(points)

    def project_points(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Project (..., 3) world points without raising.

        Returns:
            (pixels (..., 2), depths (...)); pixels are NaN where depth <= 0
        """
        cam_pts = self.to_camera_frame(points)
        z = cam_pts[..., 2]
        front = z > 0
        safe_z = np.where(front, z, 1.0)
        u = self.fx * cam_pts[..., 0] / safe_z + self.cx
        v = self.fy * cam_pts[..., 1] / safe_z + self.cy
        pixels = np.stack([u, v], axis=-1)
        pixels[~front] = np.nan
        return pixels, z

    def unproject_pixels(self, pixels: np.ndarray, depths: np.ndarray) -> np.ndarray:
        """Lift (..., 2) pixels with (...) z-depths to world points (no validation)."""
        pixels = np.asarray(pixels, dtype=np.float64)
        depths = np.asarray(depths, dtype=np.float64)
        x = (pixels[..., 0] - self.cx) / self.fx * depths
        y = (pixels[..., 1] - self.cy) / self.fy * depths
        return self.pose.apply(np.stack([x, y, depths], axis=-1))

    def in_bounds(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            return ((pixels[..., 0] >= 0) & (pixels[..., 0] < self.width)
                    & (pixels[..., 1] >= 0) & (pixels[..., 1] < self.height))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "focal": [self.fx, self.fy],
            "principal": [self.cx, self.cy],
            "resolution": [self.width, self.height],
            "pose": self.pose.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Camera":
        return cls(
            fx=float(data["focal"][0]), fy=float(data["focal"][1]),
            cx=float(data["principal"][0]), cy=float(data["principal"][1]),
            width=int(data["resolution"][0]), height=int(data["resolution"][1]),
            pose=SE3Transform.from_dict(data["pose"]),
        )


@dataclass(frozen=True)
class DepthMap:
    """Z-depth grid (H, W) with an explicit validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise InvalidDepthError(f"Depth values {values.shape} and validity {valid.shape} must be equal 2D grids")
        with np.errstate(invalid="ignore"):
            bad = valid & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            raise InvalidDepthError(f"{int(bad.sum())} valid depth entries are non-finite or non-positive")
        values[~valid] = 0.0
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "DepthMap":
        """Valid wherever the value is finite and positive."""
        values = np.asarray(values, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(values) & (values > 0)
        return cls(np.where(valid, values, 0.0), valid)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def sample_bilinear_many(self, pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Bilinear depth lookup at (..., 2) pixel coordinates.

        A sample is valid when it lies in [0, W) x [0, H) and every neighbour carrying
        non-zero weight is valid.

        Returns:
            (depths (...), ok (...))
        """
        pixels = np.asarray(pixels, dtype=np.float64)
        u, v = pixels[..., 0], pixels[..., 1]
        with np.errstate(invalid="ignore"):
            inside = (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)
        u = np.where(inside, u, 0.0)
        v = np.where(inside, v, 0.0)
        u0 = np.floor(u).astype(int)
        v0 = np.floor(v).astype(int)
        u1 = np.minimum(u0 + 1, self.width - 1)
        v1 = np.minimum(v0 + 1, self.height - 1)
        du, dv = u - u0, v - v0
        corners = [(v0, u0, (1 - du) * (1 - dv)), (v0, u1, du * (1 - dv)),
                   (v1, u0, (1 - du) * dv), (v1, u1, du * dv)]
        depth = np.zeros(u.shape)
        ok = inside.copy()
        for rows, cols, weight in corners:
            depth += weight * self.values[rows, cols]
            ok &= self.valid[rows, cols] | (weight == 0)
        return np.where(ok, depth, np.nan), ok

    def sample_bilinear(self, pixel: np.ndarray) -> Optional[float]:
        depth, ok = self.sample_bilinear_many(np.asarray(pixel, dtype=np.float64)[None])
        return float(depth[0]) if ok[0] else None

    def unproject(self, cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
        """
        Lift every pixel to world space.

        Returns:
            (points (H, W, 3), valid (H, W)); invalid entries are NaN
        """
        v, u = np.mgrid[0:self.height, 0:self.width]
        pixels = np.stack([u, v], axis=-1).astype(np.float64)
        points = cam.unproject_pixels(pixels, self.values)
        points[~self.valid] = np.nan
        return points, np.array(self.valid)


def project_point(p_world: np.ndarray, cam: Camera) -> Tuple[np.ndarray, float]:
    """
    Project one world point.

    Args:
        p_world: 3-vector in world coordinates
        cam: Camera

    Returns:
        (pixel 2-vector, camera-frame depth)

    Raises:
        BehindCameraError: If the camera-frame z is <= 0
    """
    cam_pt = cam.to_camera_frame(np.asarray(p_world, dtype=np.float64))
    if not cam_pt[2] > 0:
        raise BehindCameraError(f"Point {p_world} has camera-frame depth {cam_pt[2]}")
    pixel = np.array([cam.fx * cam_pt[0] / cam_pt[2] + cam.cx, cam.fy * cam_pt[1] / cam_pt[2] + cam.cy])
    return pixel, float(cam_pt[2])


def unproject_pixel(pixel: np.ndarray, depth: float, cam: Camera) -> np.ndarray:
    """
    Lift one pixel with its z-depth to a world point.

    Raises:
        InvalidDepthError: If depth is non-finite or <= 0
        OutOfBoundsError: If the pixel lies outside [0, W) x [0, H)
    """
    if not (np.isfinite(depth) and depth > 0):
        raise InvalidDepthError(f"Depth must be finite and positive, got {depth}")
    pixel = np.asarray(pixel, dtype=np.float64)
    if not cam.in_bounds(pixel):
        raise OutOfBoundsError(f"Pixel {pixel} outside {cam.width}x{cam.height} image")
    return cam.unproject_pixels(pixel, depth)


# CUSTOM EXCEPTIONS
class InvalidCameraError(GeometryError):
    """Camera intrinsics or resolution violate their invariants."""
    pass

class BehindCameraError(GeometryError):
    """Point lies on or behind the camera plane."""
    pass

class InvalidDepthError(GeometryError):
    """Depth is non-finite or non-positive."""
    pass

class OutOfBoundsError(GeometryError):
    """Pixel lies outside the image."""
    pass
