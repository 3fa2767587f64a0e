"""
Differentiable tile-based splat renderer.
"""

from .render_schema import RenderSettings, Splat2D, RenderedImage
from .projection import ProjectedSplats, project_gaussian, project_gaussians
from .rasterizer import TileBins, bin_splats, composite, rasterize, expected_depth
from .renderer import (
    SceneState,
    configure_torch,
    deform_scene,
    render_gaussians,
    render_frame,
    render_bullet_time,
    rasterize_backward,
)

__all__ = [
    "RenderSettings",
    "Splat2D",
    "RenderedImage",
    "ProjectedSplats",
    "project_gaussian",
    "project_gaussians",
    "TileBins",
    "bin_splats",
    "composite",
    "rasterize",
    "expected_depth",
    "SceneState",
    "configure_torch",
    "deform_scene",
    "render_gaussians",
    "render_frame",
    "render_bullet_time",
    "rasterize_backward",
]
