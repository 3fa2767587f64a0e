"""
Synthetic scenes with exact ground truth and scripted tracker backends.
"""

from .synth_schema import ObjectKind, SyntheticSceneSpec, SyntheticTrackerSpec, PRESETS, preset_spec
from .scene_generator import (
    Part,
    HeldOutView,
    SyntheticScene,
    object_parts,
    object_motion,
    hinge_angle,
    part_motions,
    arc_camera,
    training_cameras,
    ray_cast,
    sample_surface_points,
    generate_scene,
    make_queries,
    occlusion_runs,
    SynthError,
    UnsupportedSpecError,
)
from .synthetic_trackers import (
    SyntheticTracker2D,
    SyntheticTracker3D,
    noise_confidence,
    synthetic_tracker_2d,
    synthetic_tracker_3d,
)

__all__ = [
    "ObjectKind",
    "SyntheticSceneSpec",
    "SyntheticTrackerSpec",
    "PRESETS",
    "preset_spec",
    "Part",
    "HeldOutView",
    "SyntheticScene",
    "object_parts",
    "object_motion",
    "hinge_angle",
    "part_motions",
    "arc_camera",
    "training_cameras",
    "ray_cast",
    "sample_surface_points",
    "generate_scene",
    "make_queries",
    "occlusion_runs",
    "SynthError",
    "UnsupportedSpecError",
    "SyntheticTracker2D",
    "SyntheticTracker3D",
    "noise_confidence",
    "synthetic_tracker_2d",
    "synthetic_tracker_3d",
]
