"""
Canonical frame selection and k-means clustering of trajectory velocities.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from sklearn.cluster import kmeans_plusplus

from src.backend.core.tracking.tracking_schema import Trajectory3D
from src.backend.utils.rng import stage_rng
from .procrustes import DegenerateInputError, EmptyInputError

logger = logging.getLogger(__name__)


@dataclass
class ClusterResult:
    """Labels in [0, B) plus the k-means objective after every assignment step."""

    labels: np.ndarray
    centers: np.ndarray
    objective_history: List[float] = field(default_factory=list)
    degenerate: bool = False

    @property
    def num_clusters(self) -> int:
        return self.centers.shape[0]


def select_canonical(trajectories: Sequence[Trajectory3D]) -> int:
    """
    Frame with the most visible trajectory points; earliest wins ties.

    Raises:
        EmptyInputError: If no trajectories are given
    """
    if not trajectories:
        raise EmptyInputError("Cannot select a canonical frame without trajectories")
    counts = np.sum([np.asarray(tr.visibility, dtype=np.int64) for tr in trajectories], axis=0)
    return int(np.argmax(counts))


def velocity_features(trajectories: Sequence[Trajectory3D]) -> np.ndarray:
    """
    Concatenated per-frame velocities x_{t+1} − x_t, standardized per dimension.

    Undefined velocities (frames without a position) become 0 after standardization.
    """
    positions = np.stack([tr.positions for tr in trajectories])
    velocities = np.diff(positions, axis=1).reshape(len(trajectories), -1)
    if velocities.shape[1] == 0:
        return np.zeros((len(trajectories), 1))
    finite = np.isfinite(velocities)
    count = np.maximum(finite.sum(axis=0), 1)
    mean = np.where(finite, velocities, 0.0).sum(axis=0) / count
    centered = np.where(finite, velocities - mean, 0.0)
    std = np.sqrt((centered ** 2).sum(axis=0) / count)
    safe_std = np.where(std > 1e-12, std, 1.0)
    return np.where(std > 1e-12, centered / safe_std, 0.0)


def _objective(features: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = features - centers[labels]
    return float(np.sum(diff * diff))


def _assign(features: np.ndarray, centers: np.ndarray) -> np.ndarray:
    dist = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(dist, axis=1)


def lloyd(features: np.ndarray, centers: np.ndarray, max_iters: int = 100):
    """
    Lloyd iterations until the assignment stops changing.

    Empty clusters are re-seeded at the point farthest from its own center.

    Returns:
        (labels, centers, objective history)
    """
    centers = np.array(centers, dtype=np.float64)
    labels = _assign(features, centers)
    history = [_objective(features, centers, labels)]
    for _ in range(max_iters):
        for k in range(centers.shape[0]):
            members = labels == k
            if members.any():
                centers[k] = features[members].mean(axis=0)
        for k in range(centers.shape[0]):
            if not np.any(labels == k):
                residual = ((features - centers[labels]) ** 2).sum(axis=1)
                far = int(np.argmax(residual))
                centers[k] = features[far]
                labels[far] = k
        new_labels = _assign(features, centers)
        history.append(_objective(features, centers, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers, history


def _split_until(labels: np.ndarray, num_clusters: int) -> np.ndarray:
    labels = labels.copy()
    next_label = int(labels.max()) + 1
    while next_label < num_clusters:
        largest = int(np.argmax(np.bincount(labels, minlength=next_label)))
        members = np.flatnonzero(labels == largest)
        if members.size < 2:
            raise DegenerateInputError(f"Cannot split clusters further to reach {num_clusters}")
        labels[members[members.size // 2:]] = next_label
        next_label += 1
    return labels


def cluster_velocities(trajectories: Sequence[Trajectory3D], num_clusters: int, seed: int,
                       max_iters: int = 100) -> ClusterResult:
    """
    Group trajectories by their velocity profiles.

    Args:
        trajectories: Trajectories of equal length
        num_clusters: B
        seed: Run seed (k-means++ seeding draws from its own stream)
        max_iters: Lloyd iteration cap

    Returns:
        ClusterResult; `degenerate` is set when fewer distinct features than clusters exist,
        in which case the largest clusters are split to reach B labels

    Raises:
        EmptyInputError: If no trajectories are given
        DegenerateInputError: If B exceeds the number of trajectories
    """
    if not trajectories:
        raise EmptyInputError("Cannot cluster an empty trajectory set")
    if num_clusters > len(trajectories):
        raise DegenerateInputError(f"{num_clusters} clusters requested for {len(trajectories)} trajectories")

    features = velocity_features(trajectories)
    if num_clusters == 1:
        labels = np.zeros(len(trajectories), dtype=np.int64)
        center = features.mean(axis=0, keepdims=True)
        return ClusterResult(labels, center, [_objective(features, center, labels)])

    distinct, inverse = np.unique(features, axis=0, return_inverse=True)
    if distinct.shape[0] < num_clusters:
        logger.warning(
            f"Only {distinct.shape[0]} distinct velocity profiles for {num_clusters} clusters; splitting largest"
        )
        # np.unique orders rows, relabel by first occurrence
        first_seen = {}
        base = np.array([first_seen.setdefault(int(i), len(first_seen)) for i in inverse.reshape(-1)])
        labels = _split_until(base, num_clusters)
        centers = np.stack([features[labels == k].mean(axis=0) for k in range(num_clusters)])
        return ClusterResult(labels, centers, [_objective(features, centers, labels)], degenerate=True)

    rng = stage_rng(seed, "cluster_velocities")
    init, _ = kmeans_plusplus(features, n_clusters=num_clusters,
                              random_state=int(rng.integers(0, 2 ** 31 - 1)))
    labels, centers, history = lloyd(features, init, max_iters)
    logger.info(f"Clustered {len(trajectories)} trajectories into {num_clusters} groups "
                f"after {len(history) - 1} Lloyd iterations")
    return ClusterResult(labels.astype(np.int64), centers, history)

