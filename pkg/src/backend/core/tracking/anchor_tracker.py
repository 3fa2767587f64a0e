"""
Anchor-guided 3D point tracking.

A 2D tracker provides confident lifts (anchors); a windowed 3D tracker provides positions at
every frame, including occluded ones. Each window is corrected per frame by the rigid transform
that best maps the 3D tracker's anchor predictions onto the anchors, and windows are cross-faded.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.backend.core.geometry import Camera, DepthMap, SE3Transform
from src.backend.core.initialization.procrustes import procrustes
from .backends import PointTracker2D, PointTracker3D
from .lifting import build_anchor_sets, lift_tracks, visibility_mask, window_ranges
from .tracking_schema import (
    AnchorSet,
    QuerySet,
    TrackerConfig,
    TrackingMode,
    TrackingReport,
    Trajectory3D,
)

MIN_ANCHORS = 3


def fuse_window(raw: np.ndarray, anchors: AnchorSet) -> Tuple[np.ndarray, List[SE3Transform], int]:
    """
    Correct one window of raw 3D tracks with its anchors.

    Args:
        raw: (P, L, 3) backend positions for frames anchors.window[0]..anchors.window[1]
        anchors: Lifted anchors of the window

    Returns:
        (corrected (P, L, 3), per-frame corrections, number of frames fitted from >= 3 anchors)
    """
    raw = np.asarray(raw, dtype=np.float64)
    start, end = anchors.window
    length = end - start + 1
    if raw.shape[1] != length:
        raise ValueError(f"Raw tracks cover {raw.shape[1]} frames, window has {length}")

    fitted = {}
    for f in range(length):
        rows, positions = anchors.at_frame(start + f)
        if rows.size >= MIN_ANCHORS:
            fitted[f] = procrustes(raw[rows, f], positions)

    corrections = []
    for f in range(length):
        if f in fitted:
            corrections.append(fitted[f])
        elif fitted:
            # nearest fitted frame, earlier one on ties
            nearest = min(fitted, key=lambda g: (abs(g - f), g))
            corrections.append(fitted[nearest])
        else:
            corrections.append(SE3Transform.identity())

    corrected = np.empty_like(raw)
    for f, correction in enumerate(corrections):
        corrected[:, f] = correction.apply(raw[:, f])
    corrected[anchors.point_rows, anchors.frames - start] = anchors.positions
    return corrected, corrections, len(fitted)


def stitch_windows(windows: Sequence[Tuple[int, int]], tracks: Sequence[np.ndarray],
                   num_frames: int) -> np.ndarray:
    """
    Merge per-window tracks into one (P, T, 3) array.

    On frames shared with the previous window the result cross-fades linearly from the
    earlier window to the later one: α = (f − s + 1) / (overlap + 1) for the later window.
    """
    num_points = tracks[0].shape[0]
    out = np.full((num_points, num_frames, 3), np.nan)
    covered_until = -1
    for (start, end), window_tracks in zip(windows, tracks):
        overlap = max(0, covered_until - start + 1)
        for f in range(start, end + 1):
            current = window_tracks[:, f - start]
            if f <= covered_until:
                alpha = (f - start + 1) / (overlap + 1)
                out[:, f] = (1.0 - alpha) * out[:, f] + alpha * current
            else:
                out[:, f] = current
        covered_until = max(covered_until, end)
    return out


class AnchorTracker:
    """Runs 2D tracking, lifting, windowed 3D tracking and anchor fusion."""

    def __init__(self, backend2d: PointTracker2D, backend3d: Optional[PointTracker3D],
                 config: Optional[TrackerConfig] = None, threads: int = 1):
        self.backend2d = backend2d
        self.backend3d = backend3d
        self.config = config or TrackerConfig()
        self.threads = max(1, int(threads))

        self.logger = logging.getLogger(__name__)
        if not self.logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)
            self.logger.setLevel(logging.INFO)

    def track_all(self, queries: QuerySet, frames: Sequence[np.ndarray], depths: Sequence[DepthMap],
                  cams: Sequence[Camera],
                  mode: TrackingMode = TrackingMode.FULL) -> Tuple[List[Trajectory3D], TrackingReport]:
        """
        Produce one Trajectory3D per query.

        Args:
            queries: Points to track
            frames: T images
            depths: T depth maps
            cams: T cameras
            mode: full, no_anchor or no_3d_init

        Returns:
            (trajectories, report)

        Raises:
            BackendFailureError: If a backend raises or returns malformed output
        """
        mode = TrackingMode(mode)
        num_frames = len(frames)
        if len(depths) != num_frames or len(cams) != num_frames:
            raise TrackingError(f"Got {num_frames} frames, {len(depths)} depth maps and {len(cams)} cameras")
        num_points = len(queries)
        self.logger.info(f"Tracking {num_points} points over {num_frames} frames ({mode.value})")

        try:
            tracks2d = self.backend2d.track(queries, frames)
        except Exception as e:
            self.logger.error(f"2D tracker failed: {e}")
            raise BackendFailureError("track2d", str(e))
        if tracks2d.positions.shape != (num_points, num_frames, 2):
            raise BackendFailureError("track2d", f"unexpected output shape {tracks2d.positions.shape}")

        lifted, mask, demoted = lift_tracks(tracks2d.positions, tracks2d.confidence, depths, cams,
                                            self.config.tau)
        report = TrackingReport(mode=mode, num_points=num_points, num_frames=num_frames,
                                demoted_frames=demoted, masked_frames=int(mask.sum()))

        if mode == TrackingMode.NO_3D_INIT:
            positions = lifted
            partial = True
        else:
            positions = self._track_3d(queries, frames, depths, cams, lifted, mask, mode, report)
            partial = False

        visibility = np.zeros((num_points, num_frames), dtype=bool)
        for t in range(num_frames):
            visibility[:, t] = visibility_mask(positions[:, t], depths[t], cams[t], self.config.vis_tol)

        trajectories = [
            Trajectory3D(
                point_id=int(queries.ids[p]),
                positions=positions[p],
                visibility=visibility[p],
                confidence=tracks2d.confidence[p],
                mask=mask[p],
                pixels=tracks2d.positions[p],
                partial=partial,
            )
            for p in range(num_points)
        ]
        self.logger.info(f"Tracked {num_points} trajectories; {report.masked_frames} masked point-frames")
        return trajectories, report

    def _track_3d(self, queries, frames, depths, cams, lifted, mask, mode, report) -> np.ndarray:
        if self.backend3d is None:
            raise BackendFailureError("track3d", "no 3D backend registered")
        num_frames = len(frames)
        windows = window_ranges(num_frames, self.config)
        anchor_sets = build_anchor_sets(lifted, mask, self.config, num_frames)
        report.windows = windows
        report.anchors_per_window = [len(a) for a in anchor_sets]

        def run_window(index: int):
            start, end = windows[index]
            try:
                raw = np.asarray(self.backend3d.track_window(queries, start, end, frames, depths, cams),
                                 dtype=np.float64)
            except Exception as e:
                raise BackendFailureError("track3d", f"window {windows[index]}: {e}")
            if raw.shape != (len(queries), end - start + 1, 3) or not np.all(np.isfinite(raw)):
                raise BackendFailureError("track3d", f"window {windows[index]} returned malformed positions")
            if mode == TrackingMode.NO_ANCHOR:
                return raw, 0
            try:
                corrected, _, fitted = fuse_window(raw, anchor_sets[index])
            except Exception as e:
                raise BackendFailureError("fuse", f"window {windows[index]}: {e}")
            return corrected, fitted

        workers = self.threads if self.backend3d.thread_safe else 1
        try:
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(run_window, range(len(windows))))
            else:
                results = [run_window(i) for i in range(len(windows))]
        except BackendFailureError as e:
            self.logger.error(str(e))
            raise

        report.fitted_frames_per_window = [fitted for _, fitted in results]
        return stitch_windows(windows, [tracks for tracks, _ in results], num_frames)


def track_all(queries: QuerySet, frames: Sequence[np.ndarray], depths: Sequence[DepthMap],
              cams: Sequence[Camera], backend2d: PointTracker2D, backend3d: Optional[PointTracker3D],
              cfg: Optional[TrackerConfig] = None, mode: TrackingMode = TrackingMode.FULL,
              threads: int = 1) -> Tuple[List[Trajectory3D], TrackingReport]:
    """Functional entry point around AnchorTracker.track_all."""
    tracker = AnchorTracker(backend2d, backend3d, cfg, threads=threads)
    return tracker.track_all(queries, frames, depths, cams, mode)


# CUSTOM EXCEPTIONS
class TrackingError(Exception):
    """Base exception for tracking errors."""
    pass

class BackendFailureError(TrackingError):
    """A tracker backend or fusion stage failed."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
