"""
Joint optimization of canonical Gaussians and the motion tree.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
import wandb
from sklearn.neighbors import NearestNeighbors

from src.backend.core.geometry import Camera, DepthMap
from src.backend.core.geometry.quaternion_ops import se3_apply
from src.backend.core.motion import BindingTable, MotionTree
from src.backend.core.render import RenderSettings, SceneState, deform_scene, render_gaussians
from src.backend.core.render.projection import project_gaussians
from src.backend.utils.rng import stage_rng
from .losses import arap_loss, check_finite, render_losses, total_loss
from .optim_schema import LossConfig, OptimizeSettings

DTYPE = torch.float64
TERMS = ("rgb", "mask", "depth", "track2d", "arap")


@dataclass
class TrainingData:
    """
    Observations the scene is fitted to.

    Attributes:
        frames: T images (H, W, 3)
        masks: T object masks (H, W)
        depths: T depth maps
        cams: T cameras
        track_pixels: (N, T, 2) 2D track of the trajectory each Gaussian was born from
        track_mask: (N, T) confidence mask of those tracks
    """

    frames: Sequence[np.ndarray]
    masks: Sequence[np.ndarray]
    depths: Sequence[DepthMap]
    cams: Sequence[Camera]
    track_pixels: Optional[np.ndarray] = None
    track_mask: Optional[np.ndarray] = None

    @property
    def num_frames(self) -> int:
        return len(self.frames)


@dataclass
class OptimizeResult:
    """Optimized state and the per-iteration loss history."""

    state: SceneState
    tree: MotionTree
    history: List[Dict[str, float]] = field(default_factory=list)
    moments: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)


def arap_pairs(positions: np.ndarray, clusters: np.ndarray, k: int) -> np.ndarray:
    """(P, 2) pairs linking every node to its k nearest nodes of the same cluster."""
    pairs = []
    for cluster in np.unique(clusters):
        members = np.flatnonzero(clusters == cluster)
        if members.size < 2:
            continue
        kk = min(k, members.size - 1)
        _, idx = NearestNeighbors(n_neighbors=kk + 1).fit(positions[members]).kneighbors(positions[members])
        for row, neighbours in enumerate(idx):
            for col in neighbours[1:]:
                pairs.append((members[row], members[col]))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


class MotionOptimizer:
    """Adam over Gaussian and motion-tree parameter groups with per-step re-projection."""

    def __init__(self, state: SceneState, tree: MotionTree, bindings: BindingTable, data: TrainingData,
                 loss_config: Optional[LossConfig] = None, settings: Optional[OptimizeSettings] = None,
                 render_settings: Optional[RenderSettings] = None, seed: int = 0):
        self.state = state
        self.tree = tree
        self.bindings = bindings
        self.data = data
        self.loss_config = loss_config or LossConfig()
        self.settings = settings or OptimizeSettings()
        self.render_settings = render_settings or RenderSettings()
        self.seed = seed
        self.rng = stage_rng(seed, "optimize")
        self.history: List[Dict[str, float]] = []

        self.logger = logging.getLogger(__name__)
        if not self.logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s')
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)
            self.logger.setLevel(logging.INFO)

        self.params = {**state.learnable(), **tree.learnable()}
        for tensor in self.params.values():
            tensor.requires_grad_(True)
        rates = {**OptimizeSettings().learning_rates, **self.settings.learning_rates}
        self.group_names = list(self.params)
        self.optimizer = torch.optim.Adam(
            [{"params": [self.params[name]], "lr": rates.get(name, 1e-3), "name": name} for name in self.group_names],
            betas=(0.9, 0.999), eps=1e-15,
        )
        decay = self._mean_decay()
        self.scheduler = torch.optim.lr_scheduler.LambdaLR(
            self.optimizer,
            [(lambda step, d=decay: d ** step) if name == "means" else (lambda step: 1.0) for name in self.group_names],
        )

        leaf_positions = tree.leaf_positions0.detach().numpy()
        self.pairs = torch.as_tensor(arap_pairs(leaf_positions, tree.leaf_clusters, self.settings.arap_k))
        self.logger.info(f"Optimizer ready: {len(self.group_names)} parameter groups, {len(self.pairs)} ARAP pairs")

    def _mean_decay(self) -> float:
        steps = max(self.settings.iterations - 1, 1)
        return math.exp(math.log(self.settings.mean_lr_final_ratio) / steps)

    def _track_terms(self, means_t: torch.Tensor, cam: Camera, t: int):
        if self.data.track_pixels is None or self.data.track_mask is None:
            return None, None
        rows = np.flatnonzero(self.data.track_mask[:, t])
        if rows.size == 0:
            return None, None
        sel = torch.as_tensor(rows)
        covs = torch.eye(3, dtype=DTYPE).expand(rows.size, 3, 3)
        proj = project_gaussians(means_t[sel], covs, cam, self.render_settings)
        keep = proj.valid
        obs = torch.as_tensor(self.data.track_pixels[rows, t], dtype=DTYPE)
        return proj.means2d[keep], obs[keep]

    def _arap(self) -> torch.Tensor:
        num_frames = self.tree.num_frames
        if num_frames < 2 or self.pairs.numel() == 0 or self.loss_config.lambda_arap == 0:
            return torch.zeros((), dtype=DTYPE)
        positions0 = self.tree.leaf_positions0
        total = torch.zeros((), dtype=DTYPE)
        for _ in range(self.settings.frame_pairs):
            t, u = self.rng.choice(num_frames, size=2, replace=False)
            q_t, tr_t = self.tree.leaf_motions(int(t))
            q_u, tr_u = self.tree.leaf_motions(int(u))
            total = total + arap_loss(se3_apply(q_t, tr_t, positions0), se3_apply(q_u, tr_u, positions0),
                                      q_t, tr_t, q_u, tr_u, self.pairs,
                                      self.loss_config.w1, self.loss_config.w2, reduction="mean")
        return total / self.settings.frame_pairs

    def compute_terms(self, t: int) -> Dict[str, torch.Tensor]:
        """All loss terms for training frame t."""
        cam = self.data.cams[t]
        means_t, covs_t = deform_scene(self.state, self.tree, self.bindings, t)
        rendered = render_gaussians(means_t, covs_t, self.state.sh, self.state.opacities, cam,
                                    self.state.background, self.render_settings)
        depth = self.data.depths[t]
        track_pred, track_obs = self._track_terms(means_t, cam, t)
        terms = render_losses(rendered, self.data.frames[t], self.data.masks[t], depth.values, depth.valid,
                              track_pred, track_obs, self.loss_config)
        terms["arap"] = self._arap()
        return terms

    @torch.no_grad()
    def reproject(self) -> None:
        """Clamp scales and opacities into range; restore identity bases at the canonical frame."""
        self.state.scales.clamp_(min=self.settings.min_scale)
        self.state.opacities.clamp_(min=self.settings.min_opacity, max=1.0)
        self.tree.enforce_canonical_identity()

    def step(self, iteration: int) -> Dict[str, float]:
        t = int(self.rng.integers(0, self.data.num_frames))
        self.optimizer.zero_grad(set_to_none=False)
        terms = self.compute_terms(t)
        check_finite(terms)
        loss = total_loss(terms, self.loss_config)
        check_finite({"total": loss})
        if loss.requires_grad:
            loss.backward()
        self.optimizer.step()
        self.scheduler.step()
        self.reproject()
        row = {"iteration": iteration, "frame": t, **{k: float(v.detach()) for k, v in terms.items()},
               "total": float(loss.detach())}
        self.history.append(row)
        return row

    def moments(self) -> Dict[str, Dict[str, np.ndarray]]:
        """Adam first/second moments per parameter group."""
        out = {}
        for name in self.group_names:
            state = self.optimizer.state.get(self.params[name], {})
            if "exp_avg" in state:
                out[name] = {"exp_avg": state["exp_avg"].detach().numpy().copy(),
                             "exp_avg_sq": state["exp_avg_sq"].detach().numpy().copy()}
        return out

    def run(self) -> OptimizeResult:
        """
        Run all iterations.

        Returns:
            OptimizeResult

        Raises:
            NonFiniteLossError: If any term becomes non-finite
        """
        run = None
        if self.settings.wandb:
            run = wandb.init(project=self.settings.wandb_project, mode=os.getenv("WANDB_MODE", "offline"),
                             config={"loss": self.loss_config.model_dump(), "optimize": self.settings.model_dump()})
        try:
            for iteration in range(self.settings.iterations):
                row = self.step(iteration)
                if run is not None:
                    wandb.log({k: v for k, v in row.items() if k != "iteration"}, step=iteration)
                if iteration % self.settings.log_every == 0 or iteration == self.settings.iterations - 1:
                    self.logger.info(f"iter {iteration}: total {row['total']:.6f} "
                                     f"(rgb {row['rgb']:.4f}, mask {row['mask']:.4f}, depth {row['depth']:.4f}, "
                                     f"track2d {row['track2d']:.4f}, arap {row['arap']:.2e})")
        except Exception as e:
            self.logger.error(f"Optimization failed: {e}")
            raise
        finally:
            if run is not None:
                wandb.finish()

        for tensor in self.params.values():
            tensor.requires_grad_(False)
        return OptimizeResult(self.state, self.tree, self.history, self.moments())


def optimize(state: SceneState, tree: MotionTree, bindings: BindingTable, data: TrainingData,
             loss_config: Optional[LossConfig] = None, settings: Optional[OptimizeSettings] = None,
             render_settings: Optional[RenderSettings] = None, seed: int = 0) -> OptimizeResult:
    """Functional entry point around MotionOptimizer."""
    return MotionOptimizer(state, tree, bindings, data, loss_config, settings, render_settings, seed).run()
