"""
Hierarchical motion tree: node motions from shared bases and per-Gaussian interpolation.
"""

from .blending import blend_se3
from .motion_tree import (
    MotionBasis,
    MotionNode,
    InterpolationBinding,
    BindingTable,
    MotionTree,
    node_motion,
    interp_weights,
    compute_bindings,
    default_rbf_radius,
    blend_transforms,
    MotionError,
    DimensionMismatchError,
    TooFewNodesError,
    IndexOutOfRangeError,
)

__all__ = [
    "blend_se3",
    "MotionBasis",
    "MotionNode",
    "InterpolationBinding",
    "BindingTable",
    "MotionTree",
    "node_motion",
    "interp_weights",
    "compute_bindings",
    "default_rbf_radius",
    "blend_transforms",
    "MotionError",
    "DimensionMismatchError",
    "TooFewNodesError",
    "IndexOutOfRangeError",
]
