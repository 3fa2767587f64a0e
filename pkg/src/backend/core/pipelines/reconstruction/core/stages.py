"""
Reconstruction stages: scene synthesis, tracking, initialization, optimization, rendering and
evaluation. Every stage reads its inputs from disk and persists its outputs under the workspace.
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import torch
from prefect import task
from prefect.cache_policies import NO_CACHE

from src.backend.boundary.storage import (
    SceneBundle,
    dump_json,
    held_out_name,
    read_bindings,
    read_gaussians,
    read_image,
    read_motion_tree,
    read_scene_bundle,
    read_trajectories,
    write_bindings,
    write_gaussians,
    write_image,
    write_loss_csv,
    write_moments,
    write_motion_tree,
    write_scene_bundle,
    write_trajectories,
)
from src.backend.core.initialization import initialize
from src.backend.core.metrics import EvalReport, masked_bbox_eval, track_error
from src.backend.core.optim import TrainingData, optimize
from src.backend.core.render import SceneState, configure_torch, render_bullet_time, render_frame
from src.backend.core.synth import (
    SyntheticTracker2D,
    SyntheticTracker3D,
    arc_camera,
    generate_scene,
    make_queries,
)
from src.backend.core.tracking import AnchorTracker, TrackingMode, Trajectory3D, hold_last_visible
from ..pipeline_schema import PipelineConfig

MANIFEST = "manifest.json"
SUMMARY = "summary.txt"


class ReconstructionStages:
    """
    Stage implementations bound to one PipelineConfig.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.workspace = config.workspace_path

        self.logger = logging.getLogger(__name__)
        if not self.logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
            self.logger.addHandler(handler)
            self.logger.setLevel(logging.INFO)

        configure_torch()

    # paths

    @property
    def tracks_dir(self) -> Path:
        return self.workspace / "tracks"

    @property
    def init_dir(self) -> Path:
        return self.workspace / "init"

    @property
    def checkpoint_dir(self) -> Path:
        return self.workspace / "checkpoint"

    @property
    def renders_dir(self) -> Path:
        return self.workspace / "renders"

    @property
    def eval_dir(self) -> Path:
        return self.workspace / "eval"

    def _require(self, stage: str, *paths: Path) -> None:
        for path in paths:
            if not path.exists():
                raise StageError(stage, f"missing input {path}; run the earlier stage first")

    def _bundle(self, stage: str) -> SceneBundle:
        self._require(stage, self.config.bundle_path)
        return read_scene_bundle(self.config.bundle_path)

    def _load_model(self, directory: Path):
        scene = read_gaussians(directory / "gaussians.bin")
        tree = read_motion_tree(directory / "motion_tree.json")
        bindings = read_bindings(directory / "bindings.bin")
        return SceneState.from_scene(scene), tree, bindings

    def _eval_frames(self, num_frames: int) -> List[int]:
        return list(range(0, num_frames, self.config.eval.frame_stride))

    # stages

    def synthesize(self) -> Dict[str, Any]:
        """Generate the synthetic scene and write it as a bundle."""
        try:
            spec = self.config.scene_spec()
            scene = generate_scene(spec, threads=self.config.threads)
            written = write_scene_bundle(SceneBundle.from_scene(scene), self.config.bundle_path)
            self.logger.info(f"synth: wrote {len(written)} files to {self.config.bundle_path}")
            return {"stage": "synth", "frames": scene.num_frames, "points": len(scene.gt_tracks),
                    "held_out_views": len(scene.held_out)}
        except StageError:
            raise
        except Exception as e:
            self.logger.error(f"synth failed: {e}")
            raise StageError("synth", str(e)) from e

    def track(self) -> Dict[str, Any]:
        """Scripted 2D/3D backends through the anchor tracker in the configured ablation mode."""
        try:
            bundle = self._bundle("track")
            if not bundle.gt_tracks:
                raise StageError("track", "the scripted tracker backends need ground-truth tracks in the bundle")
            mode = TrackingMode(self.config.ablation)
            spec = self.config.tracker_spec()
            backend3d = None if mode == TrackingMode.NO_3D_INIT else SyntheticTracker3D(spec, bundle.gt_tracks)
            tracker = AnchorTracker(SyntheticTracker2D(spec, bundle.gt_tracks), backend3d,
                                    self.config.tracking, threads=self.config.threads)
            trajectories, report = tracker.track_all(make_queries(bundle.gt_tracks), bundle.frames,
                                                     bundle.depths, bundle.cams, mode)
            write_trajectories(self.tracks_dir / "trajectories.jsonl", trajectories)
            dump_json(self.tracks_dir / "report.json", report.model_dump(mode="json"))
            return {"stage": "track", "mode": mode.value, "trajectories": len(trajectories),
                    "windows": len(report.windows), "demoted_frames": report.demoted_frames}
        except StageError:
            raise
        except Exception as e:
            self.logger.error(f"track failed: {e}")
            raise StageError("track", str(e)) from e

    def initialize(self) -> Dict[str, Any]:
        """Canonical Gaussians, motion bases, nodes and bindings from the trajectories."""
        try:
            bundle = self._bundle("init")
            self._require("init", self.tracks_dir / "trajectories.jsonl")
            trajectories = read_trajectories(self.tracks_dir / "trajectories.jsonl")
            result = initialize(trajectories, bundle.frames, self.config.init_config(), bundle.background)
            write_gaussians(self.init_dir / "gaussians.bin", result.scene)
            write_motion_tree(self.init_dir / "motion_tree.json", result.tree)
            write_bindings(self.init_dir / "bindings.bin", result.bindings)
            dump_json(self.init_dir / "summary.json", {
                "canonical_frame": result.canonical_frame,
                "num_gaussians": result.scene.num_gaussians,
                "num_bases": result.tree.num_bases,
                "num_nodes": result.tree.num_level1_nodes,
                "num_leaves": result.tree.num_leaves,
                "cluster_sizes": np.bincount(result.clusters.labels, minlength=result.clusters.num_clusters).tolist(),
                "degenerate_clustering": bool(result.clusters.degenerate),
            })
            return {"stage": "init", "gaussians": result.scene.num_gaussians,
                    "canonical_frame": result.canonical_frame, "bases": result.tree.num_bases}
        except StageError:
            raise
        except Exception as e:
            self.logger.error(f"init failed: {e}")
            raise StageError("init", str(e)) from e

    def _training_data(self, bundle: SceneBundle, state: SceneState,
                       trajectories: List[Trajectory3D]) -> TrainingData:
        by_id = {tr.point_id: tr for tr in trajectories}
        ids = state.source_ids
        pixels = np.zeros((len(ids), bundle.num_frames, 2))
        mask = np.zeros((len(ids), bundle.num_frames), dtype=bool)
        for row, point_id in enumerate(ids):
            track = by_id.get(int(point_id))
            if track is None:
                continue
            pixels[row] = np.nan_to_num(track.pixels)
            mask[row] = track.mask
        return TrainingData(bundle.frames, bundle.masks, bundle.depths, bundle.cams, pixels, mask)

    def optimize(self) -> Dict[str, Any]:
        """Joint photometric, geometric and rigidity optimization from the initialization."""
        try:
            bundle = self._bundle("optimize")
            self._require("optimize", self.init_dir / "gaussians.bin", self.tracks_dir / "trajectories.jsonl")
            state, tree, bindings = self._load_model(self.init_dir)
            trajectories = read_trajectories(self.tracks_dir / "trajectories.jsonl")
            data = self._training_data(bundle, state, trajectories)
            result = optimize(state, tree, bindings, data, self.config.loss, self.config.optimize,
                              self.config.render_settings(), self.config.seed)
            write_gaussians(self.checkpoint_dir / "gaussians.bin", result.state.to_scene())
            write_motion_tree(self.checkpoint_dir / "motion_tree.json", result.tree)
            write_bindings(self.checkpoint_dir / "bindings.bin", bindings)
            write_moments(self.checkpoint_dir / "moments.bin", result.moments)
            write_loss_csv(self.checkpoint_dir / "loss.csv", result.history)
            first = result.history[0]["total"] if result.history else None
            last = result.history[-1]["total"] if result.history else None
            return {"stage": "optimize", "iterations": len(result.history), "initial_loss": first, "final_loss": last}
        except StageError:
            raise
        except Exception as e:
            self.logger.error(f"optimize failed: {e}")
            raise StageError("optimize", str(e)) from e

    def render(self) -> Dict[str, Any]:
        """Held-out views at the evaluation frames plus a bullet-time sweep."""
        try:
            bundle = self._bundle("render")
            self._require("render", self.checkpoint_dir / "gaussians.bin")
            state, tree, bindings = self._load_model(self.checkpoint_dir)
            settings = self.config.render_settings()
            frames = self._eval_frames(bundle.num_frames)
            count = 0
            with torch.no_grad():
                views = [(held_out_name(v.offset_deg), [v.cam] * bundle.num_frames) for v in bundle.held_out]
                if self.config.eval.include_training_views:
                    views.append(("train", bundle.cams))
                for name, cams in views:
                    for t in frames:
                        image = render_frame(state, tree, bindings, cams[t], t, settings).numpy()[0]
                        write_image(self.renders_dir / name / f"{t:04d}.png", image)
                        count += 1

                if bundle.spec is not None and self.config.bullet_time_views > 0:
                    t = bundle.num_frames // 2
                    azimuths = np.linspace(0.0, 360.0, self.config.bullet_time_views, endpoint=False)
                    cams = [arc_camera(bundle.spec, float(a)) for a in azimuths]
                    for i, rendered in enumerate(render_bullet_time(state, tree, bindings, t, cams, settings)):
                        write_image(self.renders_dir / "bullet_time" / f"{i:02d}.png", rendered.numpy()[0])
                        count += 1
            self.logger.info(f"render: wrote {count} images")
            return {"stage": "render", "images": count}
        except StageError:
            raise
        except Exception as e:
            self.logger.error(f"render failed: {e}")
            raise StageError("render", str(e)) from e

    def evaluate(self) -> Dict[str, Any]:
        """Masked-bbox PSNR/SSIM on the rendered views and trajectory error against ground truth."""
        try:
            bundle = self._bundle("eval")
            self._require("eval", self.renders_dir)
            margin = self.config.eval.margin_frac
            views = []
            sources = [(held_out_name(v.offset_deg), v.frames, v.masks) for v in bundle.held_out]
            if self.config.eval.include_training_views:
                sources.append(("train", bundle.frames, bundle.masks))
            for name, gt_frames, gt_masks in sources:
                for t in self._eval_frames(bundle.num_frames):
                    if not gt_masks[t].any():
                        self.logger.warning(f"eval: empty object mask in {name} frame {t}; skipped")
                        continue
                    path = self.renders_dir / name / f"{t:04d}.png"
                    self._require("eval", path)
                    views.append(masked_bbox_eval(read_image(path), gt_frames[t], gt_masks[t], margin, name, t))

            trajectory = None
            tracks_path = self.tracks_dir / "trajectories.jsonl"
            if bundle.gt_tracks and tracks_path.exists():
                trajectory = self._trajectory_error(read_trajectories(tracks_path), bundle.gt_tracks)

            report = EvalReport.from_views(TrackingMode(self.config.ablation).value, self.config.seed, views, trajectory)
            self.eval_dir.mkdir(parents=True, exist_ok=True)
            (self.eval_dir / "report.json").write_text(report.to_json() + "\n")
            (self.eval_dir / "report.csv").write_text(report.to_csv())
            return {"stage": "eval", "views": len(views), "mean_psnr": report.mean_psnr, "mean_ssim": report.mean_ssim}
        except StageError:
            raise
        except Exception as e:
            self.logger.error(f"eval failed: {e}")
            raise StageError("eval", str(e)) from e

    def _trajectory_error(self, predicted: List[Trajectory3D], gt_tracks: List[Trajectory3D]):
        gt_by_id = {tr.point_id: tr for tr in gt_tracks}
        gt = [gt_by_id[tr.point_id] for tr in predicted]
        filled = []
        for tr in predicted:
            # lift-only tracks hold their last visible position through occlusions
            positions = hold_last_visible(tr.positions) if tr.partial else tr.positions
            filled.append(Trajectory3D(tr.point_id, positions, tr.visibility, tr.confidence, tr.mask,
                                       tr.pixels, partial=True))
        occluded = ~np.stack([tr.visibility for tr in gt]) if gt else None
        return track_error(filled, gt, occluded)

    # run artifacts

    def write_manifest(self) -> Path:
        """sha256 of every artifact under the workspace (the manifest and summary excluded)."""
        artifacts = []
        for path in sorted(p for p in self.workspace.rglob("*") if p.is_file()):
            relative = path.relative_to(self.workspace).as_posix()
            if relative in (MANIFEST, SUMMARY):
                continue
            data = path.read_bytes()
            artifacts.append({"path": relative, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
        return dump_json(self.workspace / MANIFEST, {
            "seed": self.config.seed,
            "ablation": TrackingMode(self.config.ablation).value,
            "artifacts": artifacts,
        })

    def write_summary(self, summaries: List[Dict[str, Any]]) -> Path:
        lines = [f"reconstruction run  seed={self.config.seed}  ablation={TrackingMode(self.config.ablation).value}",
                 f"workspace: {self.workspace}", ""]
        for summary in summaries:
            details = ", ".join(f"{k}={v}" for k, v in summary.items() if k != "stage")
            lines.append(f"[{summary['stage']}] {details}")
        path = self.workspace / SUMMARY
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
        return path


@task(description="Generate the synthetic scene bundle", tags=["reconstruction", "synth"], cache_policy=NO_CACHE)
def synth_task(stages: ReconstructionStages) -> Dict[str, Any]:
    return stages.synthesize()


@task(description="Track and fuse 3D trajectories", tags=["reconstruction", "tracking"], cache_policy=NO_CACHE)
def track_task(stages: ReconstructionStages) -> Dict[str, Any]:
    return stages.track()


@task(description="Initialize Gaussians and the motion tree", tags=["reconstruction", "initialization"], cache_policy=NO_CACHE)
def init_task(stages: ReconstructionStages) -> Dict[str, Any]:
    return stages.initialize()


@task(description="Optimize Gaussians and motion", tags=["reconstruction", "optimization"], cache_policy=NO_CACHE)
def optimize_task(stages: ReconstructionStages) -> Dict[str, Any]:
    return stages.optimize()


@task(description="Render held-out and bullet-time views", tags=["reconstruction", "render"], cache_policy=NO_CACHE)
def render_task(stages: ReconstructionStages) -> Dict[str, Any]:
    return stages.render()


@task(description="Evaluate renders and trajectories", tags=["reconstruction", "eval"], cache_policy=NO_CACHE)
def eval_task(stages: ReconstructionStages) -> Dict[str, Any]:
    return stages.evaluate()


# CUSTOM EXCEPTIONS
class PipelineError(Exception):
    """Base exception for pipeline errors."""
    pass

class StageError(PipelineError):
    """A stage failed; the message names the stage."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
