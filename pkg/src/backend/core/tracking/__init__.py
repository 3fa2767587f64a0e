"""
Anchor-guided point tracking: backend interfaces, lifting, anchor windows and fusion.
"""

from .tracking_schema import (
    TrackerConfig,
    TrackingMode,
    TrackingReport,
    QuerySet,
    Track2DResult,
    Tracks2D,
    LiftedTrack,
    Trajectory3D,
    AnchorSet,
)
from .backends import PointTracker2D, PointTracker3D
from .lifting import (
    lift_track,
    lift_tracks,
    window_ranges,
    build_anchor_sets,
    visibility_test,
    visibility_mask,
    hold_last_visible,
)
from .anchor_tracker import (
    AnchorTracker,
    fuse_window,
    stitch_windows,
    track_all,
    TrackingError,
    BackendFailureError,
)

__all__ = [
    "TrackerConfig",
    "TrackingMode",
    "TrackingReport",
    "QuerySet",
    "Track2DResult",
    "Tracks2D",
    "LiftedTrack",
    "Trajectory3D",
    "AnchorSet",
    "PointTracker2D",
    "PointTracker3D",
    "lift_track",
    "lift_tracks",
    "window_ranges",
    "build_anchor_sets",
    "visibility_test",
    "visibility_mask",
    "hold_last_visible",
    "AnchorTracker",
    "fuse_window",
    "stitch_windows",
    "track_all",
    "TrackingError",
    "BackendFailureError",
]
