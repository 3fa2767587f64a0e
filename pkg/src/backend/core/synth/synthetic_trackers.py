"""
Scripted tracker backends replaying ground truth with controlled noise, drift and occlusion.
"""

from typing import Dict, Sequence

import numpy as np

from src.backend.core.geometry import Camera, DepthMap
from src.backend.core.tracking.backends import PointTracker2D, PointTracker3D
from src.backend.core.tracking.tracking_schema import QuerySet, Tracks2D, Trajectory3D
from src.backend.utils.rng import stage_rng
from .synth_schema import SyntheticTrackerSpec

NOISE_SCALE = 10.0


def noise_confidence(noise: np.ndarray) -> np.ndarray:
    """1 − ‖ε‖ / (‖ε‖ + 10) for (..., 2) pixel noise."""
    magnitude = np.linalg.norm(noise, axis=-1)
    return 1.0 - magnitude / (magnitude + NOISE_SCALE)


def _lookup(gt_tracks: Sequence[Trajectory3D]) -> Dict[int, Trajectory3D]:
    return {int(track.point_id): track for track in gt_tracks}


class SyntheticTracker2D(PointTracker2D):
    """Ground-truth pixel positions plus Gaussian noise; occluded frames report occlusion_conf."""

    def __init__(self, spec: SyntheticTrackerSpec, gt_tracks: Sequence[Trajectory3D]):
        self.spec = spec
        self.gt = _lookup(gt_tracks)

    def track(self, queries: QuerySet, frames: Sequence[np.ndarray]) -> Tracks2D:
        num_frames = len(frames)
        positions = np.zeros((len(queries), num_frames, 2))
        confidence = np.zeros((len(queries), num_frames))
        for row, point_id in enumerate(queries.ids):
            track = self.gt[int(point_id)]
            rng = stage_rng(self.spec.seed, "tracker2d", int(point_id))
            noise = rng.normal(0.0, 1.0, size=(num_frames, 2)) * self.spec.noise_sigma_2d
            pixels = track.pixels[:num_frames] + noise
            conf = np.where(track.visibility[:num_frames], noise_confidence(noise), self.spec.occlusion_conf)
            # behind the camera: no usable pixel
            behind = ~np.all(np.isfinite(pixels), axis=1)
            positions[row] = np.where(behind[:, None], 0.0, pixels)
            confidence[row] = np.where(behind, 0.0, conf)
        return Tracks2D(positions, confidence)


class SyntheticTracker3D(PointTracker3D):
    """
    Ground-truth 3D positions plus Gaussian noise plus linear drift.

    Each window drifts along its own seed-derived unit direction at drift_rate per frame since the
    window start, shared by all points of the window.
    """

    def __init__(self, spec: SyntheticTrackerSpec, gt_tracks: Sequence[Trajectory3D]):
        self.spec = spec
        self.gt = _lookup(gt_tracks)

    def drift_direction(self, start: int) -> np.ndarray:
        v = stage_rng(self.spec.seed, "tracker3d_drift", start).normal(size=3)
        return v / np.linalg.norm(v)

    def track_window(self, queries: QuerySet, start: int, end: int,
                     frames: Sequence[np.ndarray], depths: Sequence[DepthMap],
                     cams: Sequence[Camera]) -> np.ndarray:
        length = end - start + 1
        truth = np.stack([self.gt[int(i)].positions[start:end + 1] for i in queries.ids]).reshape(-1, length, 3)
        rng = stage_rng(self.spec.seed, "tracker3d_noise", start)
        noise = rng.normal(0.0, 1.0, size=truth.shape) * self.spec.noise_sigma_3d
        steps = np.arange(length, dtype=np.float64)[None, :, None]
        drift = self.spec.drift_rate * steps * self.drift_direction(start)
        return truth + noise + drift


def synthetic_tracker_2d(spec: SyntheticTrackerSpec, gt_tracks: Sequence[Trajectory3D]) -> SyntheticTracker2D:
    return SyntheticTracker2D(spec, gt_tracks)


def synthetic_tracker_3d(spec: SyntheticTrackerSpec, gt_tracks: Sequence[Trajectory3D]) -> SyntheticTracker3D:
    return SyntheticTracker3D(spec, gt_tracks)
