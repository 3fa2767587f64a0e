"""
Trajectory error statistics for tracker ablations.
"""

from typing import Optional, Sequence

import numpy as np

from src.backend.core.tracking.tracking_schema import Trajectory3D
from .image_metrics import MetricsError
from .metrics_schema import TrackErrorStats


def track_error(pred: Sequence[Trajectory3D], gt: Sequence[Trajectory3D],
                occluded: Optional[np.ndarray] = None) -> TrackErrorStats:
    """
    Per-point, per-frame Euclidean error between matched trajectories.

    Args:
        pred: Predicted trajectories
        gt: Ground-truth trajectories with the same ids and lengths
        occluded: Optional (P, T) occlusion mask in `gt` order; by default a frame counts as
            occluded when either side marks it invisible

    Returns:
        TrackErrorStats; frames where either side lacks a position are skipped

    Raises:
        IdMismatchError: If ids or lengths do not match
    """
    by_id = {int(tr.point_id): tr for tr in pred}
    gt_ids = [int(tr.point_id) for tr in gt]
    if len(by_id) != len(pred) or sorted(by_id) != sorted(gt_ids):
        raise IdMismatchError(f"Predicted ids {sorted(by_id)[:5]}... do not match ground-truth ids {sorted(gt_ids)[:5]}...")
    if not gt:
        return TrackErrorStats(mean=0.0, median=0.0, endpoint=0.0, endpoint_mean=0.0, num_points=0)

    matched = [by_id[i] for i in gt_ids]
    lengths = {tr.num_frames for tr in gt} | {tr.num_frames for tr in matched}
    if len(lengths) != 1:
        raise IdMismatchError(f"Trajectory lengths differ: {sorted(lengths)}")

    p = np.stack([tr.positions for tr in matched])
    g = np.stack([tr.positions for tr in gt])
    errors = np.linalg.norm(p - g, axis=-1)
    defined = np.isfinite(errors)
    if occluded is None:
        occluded = ~(np.stack([tr.visibility for tr in matched]) & np.stack([tr.visibility for tr in gt]))
    occluded = np.asarray(occluded, dtype=bool) & defined

    values = errors[defined]
    final = errors[:, -1][defined[:, -1]]
    occ = errors[occluded]
    return TrackErrorStats(
        mean=float(values.mean()) if values.size else 0.0,
        median=float(np.median(values)) if values.size else 0.0,
        endpoint=float(np.median(final)) if final.size else 0.0,
        endpoint_mean=float(final.mean()) if final.size else 0.0,
        occluded_mean=float(occ.mean()) if occ.size else None,
        occluded_median=float(np.median(occ)) if occ.size else None,
        num_points=len(gt),
        num_occluded=int(occ.size),
        undefined_frames=int((~defined).sum()),
    )


# CUSTOM EXCEPTIONS
class IdMismatchError(MetricsError):
    """Predicted and ground-truth trajectories do not pair up."""
    pass
