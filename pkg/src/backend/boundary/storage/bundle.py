"""
Scene bundles: the directory handed from scene generation to the reconstruction stages.

    spec.json            generating spec (optional for captured data)
    cameras.json         training cameras, one per frame
    frames/NNNN.ppm      RGB frames
    depths/NNNN.dpth     z-depth maps
    masks/NNNN.pgm       object masks
    gt_tracks.jsonl      ground-truth trajectories (optional)
    heldout/<name>/      camera.json plus frames/, depths/, masks/ of each held-out view
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from src.backend.core.geometry import Camera, DepthMap
from src.backend.core.synth import HeldOutView, SyntheticScene, SyntheticSceneSpec
from src.backend.core.tracking.tracking_schema import Trajectory3D
from .depth_io import read_depth, write_depth
from .image_io import StorageError, read_image, read_mask, write_image, write_mask
from .records import dump_json, load_json, read_cameras, read_trajectories, write_cameras, write_trajectories

logger = logging.getLogger(__name__)


@dataclass
class SceneBundle:
    """Observed sequence plus optional ground truth and held-out views."""

    frames: List[np.ndarray]
    depths: List[DepthMap]
    masks: List[np.ndarray]
    cams: List[Camera]
    gt_tracks: List[Trajectory3D] = field(default_factory=list)
    held_out: List[HeldOutView] = field(default_factory=list)
    spec: Optional[SyntheticSceneSpec] = None

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def background(self) -> np.ndarray:
        return np.asarray(self.spec.background if self.spec else (0.0, 0.0, 0.0), dtype=np.float64)

    @classmethod
    def from_scene(cls, scene: SyntheticScene) -> "SceneBundle":
        return cls(scene.frames, scene.depths, scene.masks, scene.cams, scene.gt_tracks,
                   scene.held_out, scene.spec)


def held_out_name(offset_deg: float) -> str:
    return f"heldout_{offset_deg:g}"


def _write_views(root: Path, frames, depths, masks) -> List[Path]:
    written = []
    for t, (frame, depth, mask) in enumerate(zip(frames, depths, masks)):
        written.append(write_image(root / "frames" / f"{t:04d}.ppm", frame))
        written.append(write_depth(root / "depths" / f"{t:04d}.dpth", depth))
        written.append(write_mask(root / "masks" / f"{t:04d}.pgm", mask))
    return written


def _read_views(root: Path, count: int):
    frames, depths, masks = [], [], []
    for t in range(count):
        for sub, suffix in (("frames", "ppm"), ("depths", "dpth"), ("masks", "pgm")):
            if not (root / sub / f"{t:04d}.{suffix}").exists():
                raise BundleFormatError(f"Missing {sub}/{t:04d}.{suffix} in {root}")
        frames.append(read_image(root / "frames" / f"{t:04d}.ppm"))
        depths.append(read_depth(root / "depths" / f"{t:04d}.dpth"))
        masks.append(read_mask(root / "masks" / f"{t:04d}.pgm"))
    return frames, depths, masks


def write_scene_bundle(bundle: SceneBundle, root) -> List[Path]:
    """
    Persist a bundle.

    Returns:
        Every file written, in write order
    """
    root = Path(root)
    written = []
    if bundle.spec is not None:
        written.append(dump_json(root / "spec.json", bundle.spec.model_dump(mode="json")))
    written.append(write_cameras(root / "cameras.json", bundle.cams))
    written += _write_views(root, bundle.frames, bundle.depths, bundle.masks)
    if bundle.gt_tracks:
        written.append(write_trajectories(root / "gt_tracks.jsonl", bundle.gt_tracks))
    for view in bundle.held_out:
        view_root = root / "heldout" / held_out_name(view.offset_deg)
        written.append(dump_json(view_root / "camera.json", {"offset_deg": view.offset_deg,
                                                              "camera": view.cam.to_dict()}))
        written += _write_views(view_root, view.frames, view.depths, view.masks)
    logger.info(f"Wrote scene bundle with {bundle.num_frames} frames and {len(bundle.held_out)} held-out views to {root}")
    return written


def read_scene_bundle(root) -> SceneBundle:
    """
    Raises:
        BundleFormatError: If required files are missing or inconsistent
    """
    root = Path(root)
    if not (root / "cameras.json").exists():
        raise BundleFormatError(f"No scene bundle at {root} (cameras.json missing)")
    try:
        cams = read_cameras(root / "cameras.json")
        frames, depths, masks = _read_views(root, len(cams))
        spec = SyntheticSceneSpec(**load_json(root / "spec.json")) if (root / "spec.json").exists() else None
        gt_tracks = read_trajectories(root / "gt_tracks.jsonl") if (root / "gt_tracks.jsonl").exists() else []
        held_out = []
        if (root / "heldout").is_dir():
            for view_root in sorted((root / "heldout").iterdir()):
                meta = load_json(view_root / "camera.json")
                v_frames, v_depths, v_masks = _read_views(view_root, len(cams))
                held_out.append(HeldOutView(float(meta["offset_deg"]), Camera.from_dict(meta["camera"]),
                                            v_frames, v_masks, v_depths))
            held_out.sort(key=lambda v: v.offset_deg)
    except BundleFormatError:
        raise
    except Exception as e:
        logger.error(f"Cannot read scene bundle {root}: {e}")
        raise BundleFormatError(f"Cannot read scene bundle {root}: {e}")

    shapes = {f.shape[:2] for f in frames} | {(c.height, c.width) for c in cams}
    if len(shapes) != 1:
        raise BundleFormatError(f"Frames and cameras disagree on resolution: {sorted(shapes)}")
    return SceneBundle(frames, depths, masks, cams, gt_tracks, held_out, spec)


# CUSTOM EXCEPTIONS
class BundleFormatError(StorageError):
    """Scene bundle directory is incomplete or inconsistent."""
    pass
