"""
Occlusion-aware initialization: canonical frame, velocity clusters, Procrustes motion bases, nodes.
"""

from .procrustes import (
    procrustes,
    alignment_residual,
    InitializationError,
    EmptyInputError,
    DegenerateInputError,
)
from .init_schema import InitConfig
from .clustering import ClusterResult, select_canonical, velocity_features, cluster_velocities, lloyd
from .motion_init import (
    InitResult,
    build_motion_bases,
    sample_nodes,
    sampling_weights,
    motion_magnitude,
    initialize,
)

__all__ = [
    "procrustes",
    "alignment_residual",
    "InitializationError",
    "EmptyInputError",
    "DegenerateInputError",
    "InitConfig",
    "ClusterResult",
    "select_canonical",
    "velocity_features",
    "cluster_velocities",
    "lloyd",
    "InitResult",
    "build_motion_bases",
    "sample_nodes",
    "sampling_weights",
    "motion_magnitude",
    "initialize",
]
