"""
Confidence-masked lifting of 2D tracks, window construction and the visibility test.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

from src.backend.core.geometry import Camera, DepthMap
from .tracking_schema import AnchorSet, LiftedTrack, Track2DResult, TrackerConfig

logger = logging.getLogger(__name__)


def lift_tracks(positions: np.ndarray, confidence: np.ndarray, depths: Sequence[DepthMap],
                cams: Sequence[Camera], tau: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Lift every confident track point through its frame's depth map.

    Args:
        positions: (P, T, 2) pixels
        confidence: (P, T) confidences
        depths: T depth maps
        cams: T cameras
        tau: Threshold; mask_t = c_t > tau

    Returns:
        (points (P, T, 3) NaN where unmasked, mask (P, T), demoted count)
    """
    positions = np.asarray(positions, dtype=np.float64)
    confidence = np.asarray(confidence, dtype=np.float64)
    num_points, num_frames = confidence.shape
    if len(depths) != num_frames or len(cams) != num_frames:
        raise ValueError(f"Tracks cover {num_frames} frames but got {len(depths)} depths and {len(cams)} cameras")

    points = np.full((num_points, num_frames, 3), np.nan)
    mask = confidence > tau
    demoted = 0
    for t in range(num_frames):
        rows = np.flatnonzero(mask[:, t])
        if rows.size == 0:
            continue
        pixels = positions[rows, t]
        sampled, ok = depths[t].sample_bilinear_many(pixels)
        ok &= cams[t].in_bounds(pixels)
        bad = rows[~ok]
        if bad.size:
            mask[bad, t] = False
            demoted += int(bad.size)
        good = rows[ok]
        points[good, t] = cams[t].unproject_pixels(pixels[ok], sampled[ok])

    if demoted:
        logger.warning(f"Demoted {demoted} confident track frames without valid depth")
    return points, mask, demoted


def lift_track(r: Track2DResult, depths: Sequence[DepthMap], cams: Sequence[Camera],
               tau: float) -> LiftedTrack:
    """Single-track form of lift_tracks."""
    points, mask, demoted = lift_tracks(r.positions[None], r.confidence[None], depths, cams, tau)
    return LiftedTrack(points[0], mask[0], demoted)


def window_ranges(num_frames: int, cfg: TrackerConfig) -> List[Tuple[int, int]]:
    """Inclusive windows starting at 0, `window_stride` apart, ending once frame T-1 is covered."""
    if num_frames < 1:
        raise ValueError("Sequence must have at least one frame")
    windows = []
    start = 0
    while True:
        end = min(start + cfg.window_len - 1, num_frames - 1)
        windows.append((start, end))
        if end == num_frames - 1:
            return windows
        start += cfg.window_stride


def build_anchor_sets(lifted_points: np.ndarray, mask: np.ndarray, cfg: TrackerConfig,
                      num_frames: int) -> List[AnchorSet]:
    """
    Collect the masked lifted points of every window.

    Args:
        lifted_points: (P, T, 3)
        mask: (P, T)
        cfg: Window parameters
        num_frames: T

    Returns:
        One AnchorSet per window
    """
    anchor_sets = []
    for start, end in window_ranges(num_frames, cfg):
        rows, cols = np.nonzero(mask[:, start:end + 1])
        frames = cols + start
        order = np.lexsort((rows, frames))
        anchor_sets.append(AnchorSet(
            window=(start, end),
            frames=frames[order].astype(np.int64),
            point_rows=rows[order].astype(np.int64),
            positions=lifted_points[rows[order], frames[order]].reshape(-1, 3),
        ))
    logger.info(f"Built {len(anchor_sets)} anchor windows with {sum(len(a) for a in anchor_sets)} anchors")
    return anchor_sets


def visibility_mask(points: np.ndarray, depth: DepthMap, cam: Camera, tol: float) -> np.ndarray:
    """
    Batched visibility for (N, 3) world points.

    A point is visible iff it is in front of the camera, projects inside the image, and its
    projected depth agrees with the bilinearly sampled depth map within tol · depth.
    """
    if not tol > 0:
        raise ValueError(f"Visibility tolerance must be positive, got {tol}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pixels, z = cam.project_points(points)
    finite = np.all(np.isfinite(points), axis=1)
    front = finite & (z > 0)
    inside = front & cam.in_bounds(pixels)
    sampled, ok = depth.sample_bilinear_many(np.where(inside[:, None], pixels, 0.0))
    ok &= inside
    with np.errstate(invalid="ignore"):
        return ok & (np.abs(z - sampled) <= tol * z)


def visibility_test(x: np.ndarray, depth: DepthMap, cam: Camera, tol: float) -> int:
    """1 if the point is visible in `cam` against `depth`, else 0."""
    return int(visibility_mask(np.asarray(x)[None], depth, cam, tol)[0])


def hold_last_visible(points: np.ndarray) -> np.ndarray:
    """
    Fill NaN frames with the last defined position (leading gaps take the first defined one).

    Args:
        points: (T, 3) or (P, T, 3)

    Returns:
        Filled copy; rows with no defined frame stay NaN
    """
    points = np.array(points, dtype=np.float64)
    squeeze = points.ndim == 2
    if squeeze:
        points = points[None]
    defined = np.all(np.isfinite(points), axis=-1)
    num_frames = points.shape[1]
    frame_idx = np.arange(num_frames)[None, :]
    last = np.maximum.accumulate(np.where(defined, frame_idx, -1), axis=1)
    first = np.argmax(defined, axis=1)[:, None]
    source = np.where(last >= 0, last, first)
    filled = np.take_along_axis(points, source[..., None], axis=1)
    return filled[0] if squeeze else filled
