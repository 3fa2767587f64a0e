"""
Unit tests for node motions, bindings and the motion tree.
"""

import numpy as np
import pytest
import torch

from src.backend.core.geometry import SE3Transform
from src.backend.core.motion import (
    BindingTable,
    DimensionMismatchError,
    IndexOutOfRangeError,
    InterpolationBinding,
    MotionBasis,
    MotionError,
    MotionNode,
    MotionTree,
    TooFewNodesError,
    blend_transforms,
    compute_bindings,
    default_rbf_radius,
    interp_weights,
    node_motion,
)


def rotation_basis(angles, axis=(0, 0, 1), trans=None) -> MotionBasis:
    transforms = [SE3Transform.from_axis_angle(axis, a, (0, 0, 0) if trans is None else trans[i])
                  for i, a in enumerate(angles)]
    return MotionBasis.from_transforms(transforms)


@pytest.fixture
def two_bases():
    """Two bases over 3 frames, identity at frame 0."""
    first = rotation_basis([0.0, 0.2, 0.4])
    second = rotation_basis([0.0, 0.6, 1.0], trans=[(0, 0, 0), (1, 0, 0), (2, 0, 0)])
    return [first, second]


@pytest.fixture
def small_tree(two_bases):
    """Four level-1 nodes on the x axis split between the two bases."""
    return MotionTree(
        basis_quats=np.stack([b.quats for b in two_bases]),
        basis_trans=np.stack([b.trans for b in two_bases]),
        node_positions=np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]]),
        node_coefficients=np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]),
        node_clusters=np.array([0, 0, 1, 1]),
        canonical_frame=0,
    )


class TestNodeMotion:
    """Test blending bases into node motions."""

    def test_identity_at_canonical_frame(self, two_bases):
        """Test that any coefficients give the identity where every basis is the identity."""
        node = MotionNode(np.zeros(3), np.array([0.3, 0.7]))
        assert node_motion(node, two_bases, 0).is_close(SE3Transform.identity(), atol=1e-12)

    def test_one_hot_selects_basis(self, two_bases):
        """Test that a one-hot node follows its basis exactly."""
        node = MotionNode(np.zeros(3), np.array([0.0, 1.0]))
        assert node_motion(node, two_bases, 2).is_close(two_bases[1].transform(2), atol=1e-12)

    def test_equal_weights_give_midpoint_rotation(self):
        """Test that equal weights of coaxial rotations average the angle."""
        bases = [rotation_basis([0.0, 0.2]), rotation_basis([0.0, 0.8])]
        node = MotionNode(np.zeros(3), np.array([0.5, 0.5]))
        expected = SE3Transform.from_axis_angle([0, 0, 1], 0.5)
        assert node_motion(node, bases, 1).is_close(expected, atol=1e-12)

    def test_parent_motion_composes_on_the_left(self, two_bases):
        """Test hierarchical composition."""
        parent = SE3Transform.from_axis_angle([1, 0, 0], 0.3, (0, 1, 0))
        node = MotionNode(np.zeros(3), np.array([1.0, 0.0]))
        expected = parent.compose(two_bases[0].transform(1))
        assert node_motion(node, two_bases, 1, parent).is_close(expected, atol=1e-12)

    def test_coefficient_count_mismatch_fails(self, two_bases):
        """Test DimensionMismatchError."""
        with pytest.raises(DimensionMismatchError):
            node_motion(MotionNode(np.zeros(3), np.array([1.0, 0.0, 0.0])), two_bases, 1)

    def test_basis_validate(self, two_bases):
        """Test basis identity and frame-count checks."""
        two_bases[0].validate(3, 0)
        with pytest.raises(DimensionMismatchError):
            two_bases[0].validate(4, 0)
        with pytest.raises(MotionError):
            two_bases[0].validate(3, 1)


class TestBindings:
    """Test RBF bindings of Gaussians to nodes."""

    def test_weights_sum_to_one(self, rng):
        """Test normalization and K neighbours per Gaussian."""
        nodes = rng.normal(size=(30, 3))
        table = compute_bindings(rng.normal(size=(200, 3)), nodes, k=4)
        assert table.indices.shape == (200, 4)
        assert np.allclose(table.weights.sum(axis=1), 1.0)
        assert (table.weights >= 0).all()

    def test_nearest_node_dominates(self):
        """Test weights decrease with distance."""
        nodes = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
        binding = interp_weights(np.array([0.1, 0.0, 0.0]), nodes, k=3, radius=1.0)
        assert binding.indices[0] == 0
        assert binding.weights[0] > binding.weights[1] > binding.weights[2]

    def test_default_radius_is_median_spacing(self):
        """Test the default RBF radius."""
        nodes = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
        assert default_rbf_radius(nodes) == pytest.approx(1.0)

    def test_too_few_nodes_fails(self):
        """Test TooFewNodesError."""
        with pytest.raises(TooFewNodesError):
            compute_bindings(np.zeros((2, 3)), np.zeros((2, 3)), k=3)

    def test_blend_rejects_unknown_index(self):
        """Test IndexOutOfRangeError."""
        binding = InterpolationBinding(np.array([0, 5]), np.array([0.5, 0.5]))
        with pytest.raises(IndexOutOfRangeError):
            blend_transforms(binding, [SE3Transform.identity()] * 2)

    def test_blend_of_equal_motions_is_that_motion(self, rng):
        """Test that identical node motions blend to themselves."""
        motion = SE3Transform.from_axis_angle([0, 1, 0], 0.7, (0.2, 0.1, -0.4))
        binding = InterpolationBinding(np.array([0, 1, 2]), np.array([0.2, 0.5, 0.3]))
        assert blend_transforms(binding, [motion] * 3).is_close(motion, atol=1e-12)


class TestMotionTree:
    """Test the learnable tree."""

    def test_gaussians_follow_identity_at_canonical(self, small_tree, rng):
        """Test every Gaussian transform is the identity at the canonical frame."""
        table = compute_bindings(rng.uniform(0, 3, size=(25, 3)), small_tree.node_positions.numpy(), k=2)
        q, t = small_tree.gaussian_transforms(table, 0)
        assert torch.allclose(q, q.new_tensor([1.0, 0, 0, 0]).expand_as(q), atol=1e-12)
        assert torch.allclose(t, torch.zeros_like(t), atol=1e-12)

    def test_node_positions_follow_bases(self, small_tree, two_bases):
        """Test level-1 node positions at a later frame."""
        moved = small_tree.node_positions_at(2).numpy()
        assert np.allclose(moved[1], two_bases[0].transform(2).apply([1.0, 0, 0]))
        assert np.allclose(moved[3], two_bases[1].transform(2).apply([3.0, 0, 0]))

    def test_second_level_composes_parent(self, two_bases):
        """Test leaves move by parent ∘ child blend."""
        child = rotation_basis([0.0, 0.1, 0.5], axis=(1, 0, 0))
        identity = rotation_basis([0.0, 0.0, 0.0])
        child_quats = np.stack([[child.quats, identity.quats]] * 2)
        child_trans = np.stack([[child.trans, identity.trans]] * 2)
        tree = MotionTree(
            basis_quats=np.stack([b.quats for b in two_bases]),
            basis_trans=np.stack([b.trans for b in two_bases]),
            node_positions=np.array([[0.0, 0, 0], [2.0, 0, 0]]),
            node_coefficients=np.array([[1.0, 0.0], [0.0, 1.0]]),
            node_clusters=np.array([0, 1]),
            canonical_frame=0,
            child_quats=child_quats, child_trans=child_trans,
            leaf_positions=np.array([[0.5, 0, 0], [2.5, 0, 0]]),
            leaf_coefficients=np.array([[1.0, 0.0], [1.0, 0.0]]),
            leaf_parents=np.array([0, 1]),
        )
        q, t = tree.leaf_motions(2)
        expected = two_bases[1].transform(2).compose(child.transform(2))
        assert SE3Transform(q[1].numpy(), t[1].numpy()).is_close(expected, atol=1e-12)
        assert tree.num_leaves == 2
        assert tree.leaf_clusters.tolist() == [0, 1]

    def test_coefficient_shape_mismatch_fails(self, two_bases):
        """Test tree validation."""
        with pytest.raises(DimensionMismatchError):
            MotionTree(np.stack([b.quats for b in two_bases]), np.stack([b.trans for b in two_bases]),
                       np.zeros((2, 3)), np.ones((2, 3)), np.zeros(2), 0)

    def test_enforce_canonical_identity(self, small_tree):
        """Test the canonical reset after a perturbation."""
        with torch.no_grad():
            small_tree.basis_trans[:, 0] += 0.5
        small_tree.enforce_canonical_identity()
        assert torch.count_nonzero(small_tree.basis_trans[:, 0]) == 0

    def test_dict_round_trip(self, small_tree):
        """Test serialization keeps node motions."""
        restored = MotionTree.from_dict(small_tree.to_dict())
        assert torch.allclose(restored.node_positions_at(2), small_tree.node_positions_at(2))
        assert restored.node_clusters.tolist() == [0, 0, 1, 1]

    def test_nodes_and_bases_views(self, small_tree):
        """Test the plain-data views of the tree."""
        assert len(small_tree.bases()) == 2
        nodes = small_tree.nodes()
        assert len(nodes) == 4
        assert all(n.parent is None and n.level == 1 for n in nodes)

    def test_binding_table_accessor(self):
        """Test per-Gaussian binding lookup."""
        table = BindingTable(np.array([[0, 1], [1, 2]]), np.array([[0.6, 0.4], [0.5, 0.5]]), 1.0)
        assert table.num_gaussians == 2
        assert table.binding(1).indices.tolist() == [1, 2]
