"""
Dynamic scene rendering: motion tree -> per-Gaussian transforms -> deformation -> projection -> compositing.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from src.backend.core.geometry import Camera
from src.backend.core.geometry.quaternion_ops import quat_normalize
from src.backend.core.motion import BindingTable, MotionTree
from src.backend.core.scene import CanonicalScene, covariance_from_factors, deform_gaussians, eval_sh
from .projection import project_gaussians
from .rasterizer import composite, expected_depth
from .render_schema import RenderSettings, RenderedImage

DTYPE = torch.float64

logger = logging.getLogger(__name__)


def configure_torch() -> None:
    """Single intra-op thread keeps float reductions in a fixed order; parallelism is across tiles."""
    torch.set_num_threads(1)


@dataclass
class SceneState:
    """Learnable canonical Gaussian tensors."""

    means: torch.Tensor
    scales: torch.Tensor
    rotations: torch.Tensor
    opacities: torch.Tensor
    sh: torch.Tensor
    background: torch.Tensor
    canonical_frame: int = 0
    source_ids: Optional[np.ndarray] = None

    @classmethod
    def from_scene(cls, scene: CanonicalScene) -> "SceneState":
        def tensor(array):
            return torch.as_tensor(np.array(array, dtype=np.float64), dtype=DTYPE)
        return cls(tensor(scene.means), tensor(scene.scales), tensor(scene.rotations),
                   tensor(scene.opacities), tensor(scene.sh), tensor(scene.background),
                   scene.canonical_frame, np.array(scene.source_ids))

    def to_scene(self) -> CanonicalScene:
        return CanonicalScene(
            means=self.means.detach().numpy().copy(),
            scales=self.scales.detach().numpy().copy(),
            rotations=quat_normalize(self.rotations.detach()).numpy().copy(),
            opacities=self.opacities.detach().numpy().copy(),
            sh=self.sh.detach().numpy().copy(),
            canonical_frame=self.canonical_frame,
            background=self.background.detach().numpy().copy(),
            source_ids=self.source_ids,
        )

    @property
    def num_gaussians(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    def learnable(self) -> Dict[str, torch.Tensor]:
        return {"means": self.means, "scales": self.scales, "rotations": self.rotations,
                "opacities": self.opacities, "sh": self.sh}


def deform_scene(state: SceneState, tree: MotionTree, bindings: BindingTable, t: int):
    """(means_t, covs_t) of every Gaussian at frame t."""
    quats_t, trans_t = tree.gaussian_transforms(bindings, t)
    covs0 = covariance_from_factors(state.scales, state.rotations)
    return deform_gaussians(state.means, covs0, quats_t, trans_t)


def render_gaussians(means: torch.Tensor, covs: torch.Tensor, sh: torch.Tensor, opacities: torch.Tensor,
                     cam: Camera, background: torch.Tensor,
                     settings: Optional[RenderSettings] = None) -> RenderedImage:
    """
    Render already-deformed Gaussians from one camera.

    Args:
        means: (N, 3) world means
        covs: (N, 3, 3) world covariances
        sh: (N, K, 3) SH coefficients
        opacities: (N,) values in (0, 1]
        cam: Camera
        background: (3,) RGB

    Returns:
        RenderedImage whose tensors carry autograd history
    """
    settings = settings or RenderSettings()
    background = torch.as_tensor(background, dtype=DTYPE)
    if means.shape[0] == 0:
        color = background.expand(cam.height, cam.width, 3).clone()
        zeros = torch.zeros((cam.height, cam.width), dtype=DTYPE)
        return RenderedImage(color, zeros, zeros.clone())

    proj = project_gaussians(means, covs, cam, settings)
    center = torch.as_tensor(np.array(cam.center), dtype=DTYPE)
    view = means - center
    dirs = view / view.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    degree = int(round(np.sqrt(sh.shape[1]))) - 1
    colors = eval_sh(degree, sh, dirs)
    features = torch.cat([colors, proj.depths[:, None]], dim=1)
    bg = torch.cat([background, torch.zeros(1, dtype=DTYPE)])
    image, alpha = composite(proj.means2d, proj.conics, opacities, features, bg, proj.radius,
                             proj.depths, proj.valid, cam.width, cam.height, settings)
    return RenderedImage(image[..., :3], alpha, expected_depth(image[..., 3], alpha))


def render_frame(state: SceneState, tree: MotionTree, bindings: BindingTable, cam: Camera, t: int,
                 settings: Optional[RenderSettings] = None) -> RenderedImage:
    """Render frame t of the dynamic scene from `cam`."""
    means_t, covs_t = deform_scene(state, tree, bindings, t)
    return render_gaussians(means_t, covs_t, state.sh, state.opacities, cam, state.background, settings)


def render_bullet_time(state: SceneState, tree: MotionTree, bindings: BindingTable, t: int,
                       cams: Sequence[Camera], settings: Optional[RenderSettings] = None) -> List[RenderedImage]:
    """Freeze time at frame t and sweep the given viewpoints."""
    with torch.no_grad():
        means_t, covs_t = deform_scene(state, tree, bindings, t)
        return [render_gaussians(means_t, covs_t, state.sh, state.opacities, cam, state.background, settings)
                for cam in cams]


def rasterize_backward(rendered: RenderedImage, params: Dict[str, torch.Tensor],
                       grad_color: Optional[torch.Tensor] = None,
                       grad_alpha: Optional[torch.Tensor] = None,
                       grad_depth: Optional[torch.Tensor] = None) -> Dict[str, torch.Tensor]:
    """
    Gradients of ⟨grad_color, color⟩ + ⟨grad_alpha, alpha⟩ + ⟨grad_depth, depth⟩ w.r.t. `params`.

    Compositing uses the analytic tile backward; deformation, blending and node motions are
    chained by autograd. Parameters the image does not depend on get zero gradients.
    """
    outputs, grads = [], []
    for tensor, grad in ((rendered.color, grad_color), (rendered.alpha, grad_alpha), (rendered.depth, grad_depth)):
        if grad is not None:
            outputs.append(tensor)
            grads.append(torch.as_tensor(grad, dtype=DTYPE))
    names = list(params)
    if not outputs:
        return {name: torch.zeros_like(params[name]) for name in names}
    result = torch.autograd.grad(outputs, [params[n] for n in names], grads, allow_unused=True, retain_graph=True)
    return {name: (g if g is not None else torch.zeros_like(params[name])) for name, g in zip(names, result)}
