"""
Hierarchical motion tree.

Level-1 node motions are blends of shared root bases. With a second level enabled, every
level-1 node owns child bases and its children move by parent ∘ blend(child bases).
Gaussians follow their K nearest leaf nodes.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from sklearn.neighbors import NearestNeighbors

from src.backend.core.geometry import SE3Transform
from src.backend.core.geometry.quaternion_ops import se3_apply, se3_compose
from .blending import blend_se3

logger = logging.getLogger(__name__)

DTYPE = torch.float64


@dataclass(frozen=True)
class MotionBasis:
    """Per-frame rigid transforms of one basis, stored as (T, 4) quats and (T, 3) translations."""

    quats: np.ndarray
    trans: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.quats.shape[0]

    def transform(self, t: int) -> SE3Transform:
        return SE3Transform(self.quats[t], self.trans[t])

    def validate(self, num_frames: int, canonical_frame: int, atol: float = 1e-9) -> None:
        if self.num_frames != num_frames or self.trans.shape[0] != num_frames:
            raise DimensionMismatchError(f"Basis has {self.num_frames} frames, sequence has {num_frames}")
        if not self.transform(canonical_frame).is_close(SE3Transform.identity(), atol):
            raise MotionError(f"Basis is not the identity at canonical frame {canonical_frame}")

    @classmethod
    def from_transforms(cls, transforms: Sequence[SE3Transform]) -> "MotionBasis":
        return cls(np.stack([tr.rotation for tr in transforms]), np.stack([tr.translation for tr in transforms]))


@dataclass(frozen=True)
class MotionNode:
    """Tree node: canonical position, coefficients v_m over its parent's bases."""

    position0: np.ndarray
    coefficients: np.ndarray
    parent: Optional[int] = None
    level: int = 1

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise MotionError("Node coefficients must be finite")


@dataclass(frozen=True)
class InterpolationBinding:
    """K leaf-node indices and normalized RBF weights for one Gaussian."""

    indices: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class BindingTable:
    """Bindings for all Gaussians: (N, K) indices and weights, frozen at the canonical frame."""

    indices: np.ndarray
    weights: np.ndarray
    radius: float

    @property
    def num_gaussians(self) -> int:
        return self.indices.shape[0]

    def binding(self, i: int) -> InterpolationBinding:
        return InterpolationBinding(self.indices[i], self.weights[i])


def _to_torch(array) -> torch.Tensor:
    return torch.tensor(np.array(array, dtype=np.float64), dtype=DTYPE)


def node_motion(node: MotionNode, bases: List[MotionBasis], t: int,
                parent_motion: Optional[SE3Transform] = None) -> SE3Transform:
    """
    Motion of one node at frame t.

    Args:
        node: Node whose coefficients weight the bases
        bases: Bases shared among the node and its siblings
        t: Frame index
        parent_motion: Motion of the parent node for hierarchical levels (left-composed)

    Returns:
        SE3Transform M_t

    Raises:
        DimensionMismatchError: If coefficient count differs from basis count
    """
    if len(node.coefficients) != len(bases):
        raise DimensionMismatchError(
            f"Node has {len(node.coefficients)} coefficients but {len(bases)} bases were given"
        )
    quats = _to_torch(np.stack([b.quats[t] for b in bases]))
    trans = _to_torch(np.stack([b.trans[t] for b in bases]))
    q, tr = blend_se3(_to_torch(node.coefficients), quats, trans)
    motion = SE3Transform(q.numpy(), tr.numpy())
    if parent_motion is not None:
        motion = parent_motion.compose(motion)
    return motion


def default_rbf_radius(node_positions: np.ndarray) -> float:
    """Median nearest-node spacing."""
    node_positions = np.asarray(node_positions, dtype=np.float64)
    if node_positions.shape[0] < 2:
        return 1.0
    dist, _ = NearestNeighbors(n_neighbors=2).fit(node_positions).kneighbors(node_positions)
    radius = float(np.median(dist[:, 1]))
    return radius if radius > 0 else 1.0


def compute_bindings(means: np.ndarray, node_positions: np.ndarray, k: int,
                     radius: Optional[float] = None) -> BindingTable:
    """
    K nearest leaf nodes per Gaussian with weights exp(-d²/2r²), normalized to sum 1.

    Raises:
        TooFewNodesError: If fewer than K nodes exist
        MotionError: If radius is not positive
    """
    node_positions = np.asarray(node_positions, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
    if node_positions.shape[0] < k:
        raise TooFewNodesError(f"Need at least {k} nodes, have {node_positions.shape[0]}")
    if radius is None:
        radius = default_rbf_radius(node_positions)
    if not radius > 0:
        raise MotionError(f"RBF radius must be positive, got {radius}")

    dist, idx = NearestNeighbors(n_neighbors=k).fit(node_positions).kneighbors(means)
    logits = -dist ** 2 / (2.0 * radius ** 2)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return BindingTable(indices=idx.astype(np.int64), weights=weights, radius=float(radius))


def interp_weights(g_mean: np.ndarray, nodes: np.ndarray, k: int, radius: float) -> InterpolationBinding:
    """Binding of a single Gaussian (see compute_bindings)."""
    return compute_bindings(np.asarray(g_mean)[None], nodes, k, radius).binding(0)


def blend_transforms(binding: InterpolationBinding, node_motions: List[SE3Transform]) -> SE3Transform:
    """
    T_t for one Gaussian from its bound node motions.

    Raises:
        IndexOutOfRangeError: If a bound index has no motion
    """
    indices = np.asarray(binding.indices, dtype=np.int64)
    if indices.min() < 0 or indices.max() >= len(node_motions):
        raise IndexOutOfRangeError(f"Binding indices {indices} exceed {len(node_motions)} node motions")
    quats = _to_torch(np.stack([node_motions[i].rotation for i in indices]))
    trans = _to_torch(np.stack([node_motions[i].translation for i in indices]))
    q, tr = blend_se3(_to_torch(binding.weights), quats, trans)
    return SE3Transform(q.numpy(), tr.numpy())


class MotionTree:
    """
    Learnable motion hierarchy backed by float64 torch tensors.

    Attributes:
        basis_quats, basis_trans: (M, T, 4), (M, T, 3) root bases
        node_positions: (n1, 3) level-1 canonical positions
        node_coefficients: (n1, M)
        node_clusters: (n1,) velocity cluster of every level-1 node
        child_quats, child_trans: (n1, M2, T, 4), (n1, M2, T, 3) per-parent child bases (optional)
        leaf_positions, leaf_coefficients, leaf_parents: level-2 nodes (optional)
    """

    def __init__(self, basis_quats, basis_trans, node_positions, node_coefficients,
                 node_clusters, canonical_frame: int,
                 child_quats=None, child_trans=None, leaf_positions=None,
                 leaf_coefficients=None, leaf_parents=None):
        self.basis_quats = _to_torch(basis_quats)
        self.basis_trans = _to_torch(basis_trans)
        self.node_positions = _to_torch(node_positions)
        self.node_coefficients = _to_torch(node_coefficients)
        self.node_clusters = np.asarray(node_clusters, dtype=np.int64)
        self.canonical_frame = int(canonical_frame)
        self.has_second_level = leaf_positions is not None
        if self.has_second_level:
            self.child_quats = _to_torch(child_quats)
            self.child_trans = _to_torch(child_trans)
            self.leaf_positions = _to_torch(leaf_positions)
            self.leaf_coefficients = _to_torch(leaf_coefficients)
            self.leaf_parents = torch.as_tensor(np.asarray(leaf_parents, dtype=np.int64))
        self._validate()

    def _validate(self) -> None:
        num_bases = self.basis_quats.shape[0]
        if self.node_coefficients.shape[1] != num_bases:
            raise DimensionMismatchError(
                f"Node coefficients have {self.node_coefficients.shape[1]} columns for {num_bases} bases"
            )
        if self.node_positions.shape[0] != self.node_coefficients.shape[0]:
            raise DimensionMismatchError("Node positions and coefficients disagree on node count")
        if not 0 <= self.canonical_frame < self.num_frames:
            raise MotionError(f"Canonical frame {self.canonical_frame} outside {self.num_frames} frames")
        if self.has_second_level:
            if self.leaf_coefficients.shape[1] != self.child_quats.shape[1]:
                raise DimensionMismatchError("Leaf coefficients do not match child basis count")
            if int(self.leaf_parents.max()) >= self.num_level1_nodes or int(self.leaf_parents.min()) < 0:
                raise MotionError("Leaf parent index outside level-1 nodes")

    @property
    def num_frames(self) -> int:
        return self.basis_quats.shape[1]

    @property
    def num_bases(self) -> int:
        return self.basis_quats.shape[0]

    @property
    def num_level1_nodes(self) -> int:
        return self.node_positions.shape[0]

    @property
    def num_leaves(self) -> int:
        return self.leaf_positions.shape[0] if self.has_second_level else self.num_level1_nodes

    @property
    def leaf_positions0(self) -> torch.Tensor:
        return self.leaf_positions if self.has_second_level else self.node_positions

    @property
    def leaf_clusters(self) -> np.ndarray:
        if self.has_second_level:
            return self.node_clusters[self.leaf_parents.numpy()]
        return self.node_clusters

    def learnable(self) -> Dict[str, torch.Tensor]:
        """Tensors the optimizer updates, keyed by parameter-group name."""
        params = {
            "basis_quats": self.basis_quats,
            "basis_trans": self.basis_trans,
            "node_coefficients": self.node_coefficients,
            "node_positions": self.node_positions,
        }
        if self.has_second_level:
            params.update({
                "child_quats": self.child_quats,
                "child_trans": self.child_trans,
                "leaf_coefficients": self.leaf_coefficients,
                "leaf_positions": self.leaf_positions,
            })
        return params

    def level1_motions(self, t: int) -> Tuple[torch.Tensor, torch.Tensor]:
        """(n1, 4), (n1, 3) node motions at frame t."""
        n1 = self.num_level1_nodes
        quats = self.basis_quats[:, t].unsqueeze(0).expand(n1, -1, -1)
        trans = self.basis_trans[:, t].unsqueeze(0).expand(n1, -1, -1)
        return blend_se3(self.node_coefficients, quats, trans)

    def leaf_motions(self, t: int) -> Tuple[torch.Tensor, torch.Tensor]:
        """(L, 4), (L, 3) motions of the leaves Gaussians interpolate."""
        parent_q, parent_t = self.level1_motions(t)
        if not self.has_second_level:
            return parent_q, parent_t
        child_q, child_t = blend_se3(self.leaf_coefficients,
                                     self.child_quats[self.leaf_parents, :, t],
                                     self.child_trans[self.leaf_parents, :, t])
        return se3_compose(parent_q[self.leaf_parents], parent_t[self.leaf_parents], child_q, child_t)

    def node_positions_at(self, t: int, level: int = 1) -> torch.Tensor:
        """x_i^t = M_i^t(x_i^0) for level-1 nodes or leaves."""
        if level == 1:
            q, tr = self.level1_motions(t)
            return se3_apply(q, tr, self.node_positions)
        q, tr = self.leaf_motions(t)
        return se3_apply(q, tr, self.leaf_positions0)

    def gaussian_transforms(self, bindings: BindingTable, t: int) -> Tuple[torch.Tensor, torch.Tensor]:
        """Per-Gaussian T_t blended from K leaf motions."""
        leaf_q, leaf_t = self.leaf_motions(t)
        idx = torch.as_tensor(bindings.indices)
        weights = torch.as_tensor(bindings.weights, dtype=DTYPE)
        return blend_se3(weights, leaf_q[idx], leaf_t[idx])

    @torch.no_grad()
    def enforce_canonical_identity(self) -> None:
        """Reset every basis to the exact identity at the canonical frame."""
        c = self.canonical_frame
        self.basis_quats[:, c] = self.basis_quats.new_tensor([1.0, 0.0, 0.0, 0.0])
        self.basis_trans[:, c] = 0.0
        if self.has_second_level:
            self.child_quats[:, :, c] = self.child_quats.new_tensor([1.0, 0.0, 0.0, 0.0])
            self.child_trans[:, :, c] = 0.0

    def bases(self) -> List[MotionBasis]:
        return [MotionBasis(self.basis_quats[m].detach().numpy().copy(),
                            self.basis_trans[m].detach().numpy().copy()) for m in range(self.num_bases)]

    def nodes(self) -> List[MotionNode]:
        """Level-1 nodes (parent None) followed by level-2 nodes (parent = level-1 index)."""
        out = [MotionNode(self.node_positions[i].detach().numpy().copy(),
                          self.node_coefficients[i].detach().numpy().copy(), None, 1)
               for i in range(self.num_level1_nodes)]
        if self.has_second_level:
            out += [MotionNode(self.leaf_positions[i].detach().numpy().copy(),
                               self.leaf_coefficients[i].detach().numpy().copy(),
                               int(self.leaf_parents[i]), 2)
                    for i in range(self.num_leaves)]
        return out

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "canonical_frame": self.canonical_frame,
            "bases": [{"quat": self.basis_quats[m].tolist(), "trans": self.basis_trans[m].tolist()}
                      for m in range(self.num_bases)],
            "nodes": [{"parent": None, "level": 1,
                       "position0": self.node_positions[i].tolist(),
                       "coefficients": self.node_coefficients[i].tolist(),
                       "cluster": int(self.node_clusters[i])}
                      for i in range(self.num_level1_nodes)],
        }
        if self.has_second_level:
            data["child_bases"] = [
                [{"quat": self.child_quats[p, m].tolist(), "trans": self.child_trans[p, m].tolist()}
                 for m in range(self.child_quats.shape[1])]
                for p in range(self.num_level1_nodes)
            ]
            data["nodes"] += [{"parent": int(self.leaf_parents[i]), "level": 2,
                               "position0": self.leaf_positions[i].tolist(),
                               "coefficients": self.leaf_coefficients[i].tolist()}
                              for i in range(self.num_leaves)]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MotionTree":
        level1 = [n for n in data["nodes"] if n["level"] == 1]
        level2 = [n for n in data["nodes"] if n["level"] == 2]
        kwargs = {}
        if level2:
            kwargs = dict(
                child_quats=np.array([[b["quat"] for b in per_parent] for per_parent in data["child_bases"]]),
                child_trans=np.array([[b["trans"] for b in per_parent] for per_parent in data["child_bases"]]),
                leaf_positions=np.array([n["position0"] for n in level2]),
                leaf_coefficients=np.array([n["coefficients"] for n in level2]),
                leaf_parents=np.array([n["parent"] for n in level2]),
            )
        return cls(
            basis_quats=np.array([b["quat"] for b in data["bases"]]),
            basis_trans=np.array([b["trans"] for b in data["bases"]]),
            node_positions=np.array([n["position0"] for n in level1]),
            node_coefficients=np.array([n["coefficients"] for n in level1]),
            node_clusters=np.array([n.get("cluster", 0) for n in level1]),
            canonical_frame=data["canonical_frame"],
            **kwargs,
        )


# CUSTOM EXCEPTIONS
class MotionError(Exception):
    """Base exception for motion-tree errors."""
    pass

class DimensionMismatchError(MotionError):
    """Coefficient and basis counts disagree."""
    pass

class TooFewNodesError(MotionError):
    """Fewer nodes than the requested neighbour count."""
    pass

class IndexOutOfRangeError(MotionError):
    """Binding references a node that does not exist."""
    pass
