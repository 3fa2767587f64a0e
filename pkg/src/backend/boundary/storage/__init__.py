"""
On-disk formats for scene bundles, checkpoints and run artifacts.
"""

from .image_io import StorageError, ImageFormatError, to_uint8, write_image, read_image, write_mask, read_mask
from .depth_io import DepthFormatError, write_depth, read_depth
from .records import (
    RecordFormatError,
    LOSS_COLUMNS,
    dump_json,
    load_json,
    write_cameras,
    read_cameras,
    trajectory_to_dict,
    trajectory_from_dict,
    write_trajectories,
    read_trajectories,
    write_motion_tree,
    read_motion_tree,
    write_table,
    read_table,
    write_gaussians,
    read_gaussians,
    write_bindings,
    read_bindings,
    write_moments,
    read_moments,
    write_loss_csv,
    read_loss_csv,
)
from .bundle import SceneBundle, BundleFormatError, held_out_name, write_scene_bundle, read_scene_bundle

__all__ = [
    "StorageError",
    "ImageFormatError",
    "to_uint8",
    "write_image",
    "read_image",
    "write_mask",
    "read_mask",
    "DepthFormatError",
    "write_depth",
    "read_depth",
    "RecordFormatError",
    "LOSS_COLUMNS",
    "dump_json",
    "load_json",
    "write_cameras",
    "read_cameras",
    "trajectory_to_dict",
    "trajectory_from_dict",
    "write_trajectories",
    "read_trajectories",
    "write_motion_tree",
    "read_motion_tree",
    "write_table",
    "read_table",
    "write_gaussians",
    "read_gaussians",
    "write_bindings",
    "read_bindings",
    "write_moments",
    "read_moments",
    "write_loss_csv",
    "read_loss_csv",
    "SceneBundle",
    "BundleFormatError",
    "held_out_name",
    "write_scene_bundle",
    "read_scene_bundle",
]
