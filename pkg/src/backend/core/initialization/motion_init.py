"""
Occlusion-aware initialization of canonical Gaussians and the motion tree from 3D trajectories.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.neighbors import NearestNeighbors

from src.backend.core.geometry import SE3Transform
from src.backend.core.motion import BindingTable, MotionBasis, MotionTree, compute_bindings
from src.backend.core.scene import CanonicalScene, sh_from_rgb
from src.backend.core.tracking.tracking_schema import Trajectory3D
from src.backend.utils.rng import stage_rng
from .clustering import ClusterResult, cluster_velocities, select_canonical
from .init_schema import InitConfig
from .procrustes import EmptyInputError, procrustes

logger = logging.getLogger(__name__)

WEIGHT_EPS = 1e-8


def build_motion_bases(trajectories: Sequence[Trajectory3D], labels: np.ndarray, canonical: int,
                       num_clusters: Optional[int] = None) -> List[MotionBasis]:
    """
    One basis per cluster: per-frame Procrustes from canonical positions to frame-t positions.

    Only points defined at both frames contribute. A frame with no usable points reuses the
    transform of its neighbour on the canonical side. The canonical frame is exactly identity.

    Args:
        trajectories: Trajectories of equal length
        labels: (P,) cluster label per trajectory
        canonical: Canonical frame index
        num_clusters: Basis count (defaults to max label + 1)

    Returns:
        List of MotionBasis, one per cluster
    """
    labels = np.asarray(labels, dtype=np.int64)
    positions = np.stack([tr.positions for tr in trajectories])
    num_frames = positions.shape[1]
    num_clusters = int(labels.max()) + 1 if num_clusters is None else num_clusters
    defined = np.all(np.isfinite(positions), axis=-1)

    bases = []
    for cluster in range(num_clusters):
        members = np.flatnonzero(labels == cluster)
        transforms: List[Optional[SE3Transform]] = [None] * num_frames
        transforms[canonical] = SE3Transform.identity()
        for t in range(num_frames):
            if t == canonical:
                continue
            rows = members[defined[members, canonical] & defined[members, t]]
            if rows.size:
                transforms[t] = procrustes(positions[rows, canonical], positions[rows, t])
        for t in range(canonical + 1, num_frames):
            if transforms[t] is None:
                transforms[t] = transforms[t - 1]
        for t in range(canonical - 1, -1, -1):
            if transforms[t] is None:
                transforms[t] = transforms[t + 1]
        bases.append(MotionBasis.from_transforms(transforms))
    return bases


def motion_magnitude(positions: np.ndarray) -> np.ndarray:
    """(N,) mean per-frame displacement of (N, T, 3) positions; undefined steps are skipped."""
    steps = np.linalg.norm(np.diff(positions, axis=1), axis=-1)
    finite = np.isfinite(steps)
    count = finite.sum(axis=1)
    total = np.where(finite, steps, 0.0).sum(axis=1)
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def sampling_weights(means: np.ndarray, positions: np.ndarray, density_k: int = 8) -> np.ndarray:
    """(motion magnitude + eps) · (distance to the k-th nearest neighbour + eps)."""
    means = np.asarray(means, dtype=np.float64)
    if means.shape[0] > 1:
        k = min(density_k, means.shape[0] - 1)
        dist, _ = NearestNeighbors(n_neighbors=k + 1).fit(means).kneighbors(means)
        sparsity = dist[:, -1]
    else:
        sparsity = np.zeros(means.shape[0])
    return (motion_magnitude(positions) + WEIGHT_EPS) * (sparsity + WEIGHT_EPS)


def sample_nodes(means: np.ndarray, positions: np.ndarray, labels: np.ndarray, n_nodes: int,
                 num_clusters: int, seed: int, density_k: int = 8,
                 stream: str = "sample_nodes") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Weighted sampling of node Gaussians without replacement.

    Args:
        means: (N, 3) canonical Gaussian means
        positions: (N, T, 3) trajectories of those Gaussians
        labels: (N,) velocity cluster per Gaussian
        n_nodes: n1 <= N
        num_clusters: Basis count for the one-hot coefficients
        seed: Run seed
        density_k: Neighbour rank of the density term

    Returns:
        (rows (n1,), node positions (n1, 3), coefficients (n1, num_clusters))
    """
    means = np.asarray(means, dtype=np.float64)
    if n_nodes > means.shape[0]:
        raise ValueError(f"Cannot sample {n_nodes} nodes from {means.shape[0]} Gaussians")
    weights = sampling_weights(means, positions, density_k)
    rng = stage_rng(seed, stream)
    rows = np.sort(rng.choice(means.shape[0], size=n_nodes, replace=False, p=weights / weights.sum()))
    coefficients = np.zeros((n_nodes, num_clusters))
    coefficients[np.arange(n_nodes), np.asarray(labels)[rows]] = 1.0
    return rows, means[rows], coefficients


def rbf_basis_mixture(node_positions: np.ndarray, cluster_centers: np.ndarray, sigma: float) -> np.ndarray:
    """Coefficients ∝ exp(−‖x − c_m‖² / 2σ²) over cluster centers, normalized per node."""
    d2 = ((node_positions[:, None, :] - cluster_centers[None, :, :]) ** 2).sum(axis=-1)
    logits = -d2 / (2.0 * sigma ** 2)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def initial_scales(means: np.ndarray, neighbors: int, min_scale: float) -> np.ndarray:
    """Isotropic (N, 3) scales from the mean distance to the nearest neighbours."""
    if means.shape[0] < 2:
        return np.full((means.shape[0], 3), max(min_scale, 0.01))
    k = min(neighbors, means.shape[0] - 1)
    dist, _ = NearestNeighbors(n_neighbors=k + 1).fit(means).kneighbors(means)
    scale = np.maximum(dist[:, 1:].mean(axis=1), min_scale)
    return np.repeat(scale[:, None], 3, axis=1)


def sample_colors(trajectories: Sequence[Trajectory3D], frames: Sequence[np.ndarray]) -> np.ndarray:
    """RGB of every trajectory at its most confidently visible frame (nearest pixel)."""
    colors = np.full((len(trajectories), 3), 0.5)
    for i, tr in enumerate(trajectories):
        score = np.where(tr.visibility & tr.mask & np.all(np.isfinite(tr.pixels), axis=1), tr.confidence, -1.0)
        t = int(np.argmax(score))
        if score[t] < 0:
            continue
        image = frames[t]
        u = int(np.clip(np.rint(tr.pixels[t, 0]), 0, image.shape[1] - 1))
        v = int(np.clip(np.rint(tr.pixels[t, 1]), 0, image.shape[0] - 1))
        colors[i] = image[v, u, :3]
    return colors


@dataclass
class InitResult:
    """Everything optimization starts from."""

    scene: CanonicalScene
    tree: MotionTree
    bindings: BindingTable
    clusters: ClusterResult
    canonical_frame: int
    trajectory_rows: np.ndarray
    node_rows: np.ndarray


def _second_level(means, positions, node_rows, config: InitConfig, num_frames: int):
    """Children sampled inside each first-level node's nearest-node region."""
    _, owner = NearestNeighbors(n_neighbors=1).fit(means[node_rows]).kneighbors(means)
    owner = owner[:, 0]
    leaf_positions, leaf_coefficients, leaf_parents = [], [], []
    for parent in range(len(node_rows)):
        region = np.flatnonzero(owner == parent)
        count = min(config.n_children, region.size)
        rows, _, _ = sample_nodes(means[region], positions[region], np.zeros(region.size, dtype=np.int64),
                                  count, 1, config.seed, config.density_k, stream=f"sample_children_{parent}")
        for j, row in enumerate(rows):
            coefficients = np.zeros(config.n_child_bases)
            coefficients[j % config.n_child_bases] = 1.0
            leaf_positions.append(means[region[row]])
            leaf_coefficients.append(coefficients)
            leaf_parents.append(parent)
    identity_q = np.zeros((len(node_rows), config.n_child_bases, num_frames, 4))
    identity_q[..., 0] = 1.0
    return dict(
        child_quats=identity_q,
        child_trans=np.zeros((len(node_rows), config.n_child_bases, num_frames, 3)),
        leaf_positions=np.stack(leaf_positions),
        leaf_coefficients=np.stack(leaf_coefficients),
        leaf_parents=np.array(leaf_parents),
    )


def initialize(trajectories: Sequence[Trajectory3D], frames: Sequence[np.ndarray],
               config: Optional[InitConfig] = None,
               background=(0.0, 0.0, 0.0)) -> InitResult:
    """
    Canonical frame, velocity clusters, Procrustes bases, node sampling and Gaussians.

    Args:
        trajectories: Tracked trajectories (partial ones allowed)
        frames: Input images for color sampling
        config: InitConfig

    Returns:
        InitResult

    Raises:
        EmptyInputError: If no trajectory has a canonical position
    """
    config = config or InitConfig()
    if not trajectories:
        raise EmptyInputError("No trajectories to initialize from")
    canonical = select_canonical(trajectories)
    usable = [i for i, tr in enumerate(trajectories) if tr.defined[canonical]]
    dropped = len(trajectories) - len(usable)
    if dropped:
        logger.warning(f"Dropped {dropped} trajectories without a position at canonical frame {canonical}")
    if not usable:
        raise EmptyInputError(f"No trajectory is defined at canonical frame {canonical}")

    rng = stage_rng(config.seed, "sample_trajectories")
    count = min(config.n_trajectories, len(usable))
    rows = np.sort(rng.choice(np.asarray(usable), size=count, replace=False))
    chosen = [trajectories[i] for i in rows]
    positions = np.stack([tr.positions for tr in chosen])
    means = positions[:, canonical].copy()
    num_frames = positions.shape[1]

    num_clusters = min(config.n_clusters, len(chosen))
    if num_clusters < config.n_clusters:
        logger.warning(f"Reducing clusters from {config.n_clusters} to {num_clusters}")
    clusters = cluster_velocities(chosen, num_clusters, config.seed, config.max_kmeans_iters)
    bases = build_motion_bases(chosen, clusters.labels, canonical, num_clusters)

    n_nodes = min(config.n_nodes, len(chosen))
    node_rows, node_positions, coefficients = sample_nodes(
        means, positions, clusters.labels, n_nodes, num_clusters, config.seed, config.density_k
    )
    if config.basis_rbf_sigma is not None:
        centers = np.stack([means[clusters.labels == m].mean(axis=0) if np.any(clusters.labels == m)
                            else np.full(3, np.inf) for m in range(num_clusters)])
        coefficients = rbf_basis_mixture(node_positions, centers, config.basis_rbf_sigma)

    second = _second_level(means, positions, node_rows, config, num_frames) if config.second_level else {}
    tree = MotionTree(
        basis_quats=np.stack([b.quats for b in bases]),
        basis_trans=np.stack([b.trans for b in bases]),
        node_positions=node_positions,
        node_coefficients=coefficients,
        node_clusters=clusters.labels[node_rows],
        canonical_frame=canonical,
        **second,
    )

    leaf_positions = tree.leaf_positions0.detach().numpy()
    k = min(config.k_neighbors, leaf_positions.shape[0])
    if k < config.k_neighbors:
        logger.warning(f"Only {leaf_positions.shape[0]} leaf nodes; interpolating {k} instead of {config.k_neighbors}")
    bindings = compute_bindings(means, leaf_positions, k, config.rbf_radius)

    scene = CanonicalScene(
        means=means,
        scales=initial_scales(means, config.scale_neighbors, config.min_scale),
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (len(chosen), 1)),
        opacities=np.full(len(chosen), config.init_opacity),
        sh=sh_from_rgb(sample_colors(chosen, frames), config.sh_degree),
        canonical_frame=canonical,
        background=np.asarray(background, dtype=np.float64),
        source_ids=np.array([tr.point_id for tr in chosen]),
    )
    logger.info(f"Initialized {scene.num_gaussians} Gaussians, {num_clusters} bases, "
                f"{tree.num_level1_nodes} nodes ({tree.num_leaves} leaves), canonical frame {canonical}")
    return InitResult(scene, tree, bindings, clusters, canonical, rows, node_rows)
