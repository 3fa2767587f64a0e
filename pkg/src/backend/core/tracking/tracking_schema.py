"""
Data types and configuration for anchor-guided point tracking.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator


class TrackingMode(str, Enum):
    """How 3D trajectories are produced."""
    FULL = "full"              # 3D backend corrected by lifted anchors
    NO_ANCHOR = "no_anchor"    # raw 3D backend, fusion disabled
    NO_3D_INIT = "no_3d_init"  # lifted 2D tracks only, occluded frames stay empty


class TrackerConfig(BaseModel):
    """Confidence threshold and temporal windowing for anchor collection"""
    tau: float = Field(default=0.5, gt=0.0, lt=1.0, description="Confidence threshold; a frame is trusted iff c_t > tau")
    window_len: int = Field(default=16, ge=1, description="Frames per anchor window")
    window_stride: int = Field(default=8, ge=1, description="Frames between successive window starts")
    vis_tol: float = Field(default=0.02, gt=0.0, description="Relative depth tolerance of the visibility test")

    @model_validator(mode="after")
    def check_stride(self) -> "TrackerConfig":
        if self.window_stride > self.window_len:
            raise ValueError(f"window_stride ({self.window_stride}) must not exceed window_len ({self.window_len})")
        return self


@dataclass(frozen=True)
class QuerySet:
    """Points to track: (P,) ids, (P,) query frames, (P, 2) query pixels."""

    ids: np.ndarray
    frames: np.ndarray
    pixels: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])


@dataclass(frozen=True)
class Track2DResult:
    """2D track of one point: (T, 2) pixel positions and (T,) confidences in [0, 1]."""

    positions: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if positions.shape[0] != confidence.shape[0]:
            raise ValueError(f"{positions.shape[0]} positions but {confidence.shape[0]} confidences")
        if np.any((confidence < 0) | (confidence > 1)) or not np.all(np.isfinite(confidence)):
            raise ValueError("Confidences must lie in [0, 1]")
        if not np.all(np.isfinite(positions[confidence > 0])):
            raise ValueError("Positions must be finite wherever confidence is positive")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "confidence", confidence)

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class Tracks2D:
    """Batched 2D tracks: (P, T, 2) positions, (P, T) confidences."""

    positions: np.ndarray
    confidence: np.ndarray

    def track(self, row: int) -> Track2DResult:
        return Track2DResult(self.positions[row], self.confidence[row])


@dataclass(frozen=True)
class LiftedTrack:
    """Confidence-masked lift of one 2D track: (T, 3) points (NaN where unmasked), (T,) mask."""

    points: np.ndarray
    mask: np.ndarray
    demoted: int = 0


@dataclass
class Trajectory3D:
    """
    3D trajectory of one tracked point.

    Attributes:
        point_id: Query id
        positions: (T, 3) world positions; finite everywhere unless `partial`
        visibility: (T,) binary visibility from the depth test
        confidence: (T,) 2D tracker confidence
        mask: (T,) confidence mask (c_t > tau with valid depth)
        pixels: (T, 2) 2D track positions
        partial: True only for lift-only trajectories, where unmasked frames are NaN
    """

    point_id: int
    positions: np.ndarray
    visibility: np.ndarray
    confidence: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    pixels: Optional[np.ndarray] = None
    partial: bool = False

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        t = self.positions.shape[0]
        self.visibility = np.asarray(self.visibility, dtype=bool).reshape(t)
        self.confidence = (np.ones(t) if self.confidence is None
                           else np.asarray(self.confidence, dtype=np.float64).reshape(t))
        self.mask = (self.visibility.copy() if self.mask is None
                     else np.asarray(self.mask, dtype=bool).reshape(t))
        self.pixels = (np.full((t, 2), np.nan) if self.pixels is None
                       else np.asarray(self.pixels, dtype=np.float64).reshape(t, 2))
        if not self.partial and not np.all(np.isfinite(self.positions)):
            raise ValueError(f"Trajectory {self.point_id} has non-finite positions")

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def defined(self) -> np.ndarray:
        """(T,) frames holding a finite position."""
        return np.all(np.isfinite(self.positions), axis=1)


@dataclass(frozen=True)
class AnchorSet:
    """
    Lifted high-confidence points inside one window [start, end] (inclusive).

    Attributes:
        window: (start, end) frame range
        frames: (A,) source frame of every anchor
        point_rows: (A,) row of the anchored point in the query set
        positions: (A, 3) lifted 3D positions
    """

    window: Tuple[int, int]
    frames: np.ndarray
    point_rows: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        start, end = self.window
        if self.frames.size and (self.frames.min() < start or self.frames.max() > end):
            raise ValueError(f"Anchor frame outside window {self.window}")

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    @property
    def length(self) -> int:
        return self.window[1] - self.window[0] + 1

    def at_frame(self, t: int) -> Tuple[np.ndarray, np.ndarray]:
        """(point_rows, positions) of anchors sourced from frame t."""
        sel = self.frames == t
        return self.point_rows[sel], self.positions[sel]


class TrackingReport(BaseModel):
    """Counters collected while tracking"""
    mode: TrackingMode = Field(description="Tracking mode that produced the trajectories")
    num_points: int = Field(ge=0, description="Number of query points")
    num_frames: int = Field(ge=0, description="Sequence length")
    windows: List[Tuple[int, int]] = Field(default_factory=list, description="Inclusive window frame ranges")
    anchors_per_window: List[int] = Field(default_factory=list, description="Anchor count of each window")
    fitted_frames_per_window: List[int] = Field(default_factory=list, description="Frames with a Procrustes fit (>= 3 anchors)")
    demoted_frames: int = Field(default=0, ge=0, description="Confident frames dropped for missing depth")
    masked_frames: int = Field(default=0, ge=0, description="Point-frames passing the confidence mask")
