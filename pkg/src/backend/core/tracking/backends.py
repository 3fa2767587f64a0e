"""
Tracker backend interfaces. Learned trackers plug in by subclassing these.
"""

from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

from src.backend.core.geometry import Camera, DepthMap
from .tracking_schema import QuerySet, Tracks2D


class PointTracker2D(ABC):
    """Dense 2D point tracker: query pixels -> per-frame pixel positions and confidences."""

    thread_safe: bool = True

    @abstractmethod
    def track(self, queries: QuerySet, frames: Sequence[np.ndarray]) -> Tracks2D:
        """
        Track every query over the whole sequence.

        Args:
            queries: Query ids, frames and pixels
            frames: T images (H, W, 3) in [0, 1]

        Returns:
            Tracks2D with (P, T, 2) positions and (P, T) confidences
        """


class PointTracker3D(ABC):
    """Windowed 3D point tracker returning world positions at every frame of a window."""

    thread_safe: bool = True

    @abstractmethod
    def track_window(self, queries: QuerySet, start: int, end: int,
                     frames: Sequence[np.ndarray], depths: Sequence[DepthMap],
                     cams: Sequence[Camera]) -> np.ndarray:
        """
        Predict 3D positions of all queries over frames start..end (inclusive).

        Returns:
            (P, end - start + 1, 3) world positions, finite at every frame
        """
