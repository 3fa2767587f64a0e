"""
Tile-based depth-sorted alpha compositing with a hand-written backward pass.

Per pixel, splats sorted front to back composite as
    out = Σ_i σ_i T_i f_i + T_final · bg,   T_i = Π_{j<i} (1 − σ_j),
where σ_i = min(α_i · exp(−½ dᵀ Σ′⁻¹ d), clamp). A splat takes part only while T_i >= min_transmittance.
Feature channels are generic, so color and depth share one pass.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from .render_schema import RenderSettings, RenderedImage, Splat2D

DTYPE = torch.float64


@dataclass(frozen=True)
class TileBins:
    """Per-tile pixel rectangle and depth-sorted splat indices."""

    tiles: List[Tuple[int, int, int, int]]
    splats: List[np.ndarray]


def bin_splats(means2d: np.ndarray, radius: np.ndarray, depths: np.ndarray, valid: np.ndarray,
               width: int, height: int, tile_size: int) -> TileBins:
    """
    Assign splats to every tile their binning square overlaps; sort each tile by (depth, index).

    Tiles are listed row-major; each entry is (u0, u1, v0, v1) with exclusive upper bounds.
    """
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    buckets: List[List[int]] = [[] for _ in range(tiles_x * tiles_y)]
    for i in np.flatnonzero(valid):
        mx, my = means2d[i]
        r = radius[i]
        if mx + r < 0 or my + r < 0 or mx - r > width - 1 or my - r > height - 1:
            continue
        tx0 = int(np.clip(np.floor((mx - r) / tile_size), 0, tiles_x - 1))
        tx1 = int(np.clip(np.floor((mx + r) / tile_size), 0, tiles_x - 1))
        ty0 = int(np.clip(np.floor((my - r) / tile_size), 0, tiles_y - 1))
        ty1 = int(np.clip(np.floor((my + r) / tile_size), 0, tiles_y - 1))
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                buckets[ty * tiles_x + tx].append(int(i))

    tiles, splats = [], []
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            members = np.asarray(buckets[ty * tiles_x + tx], dtype=np.int64)
            order = np.lexsort((members, depths[members])) if members.size else members
            tiles.append((tx * tile_size, min((tx + 1) * tile_size, width),
                          ty * tile_size, min((ty + 1) * tile_size, height)))
            splats.append(members[order])
    return TileBins(tiles, splats)


def _tile_pixels(tile) -> torch.Tensor:
    u0, u1, v0, v1 = tile
    vv, uu = torch.meshgrid(torch.arange(v0, v1, dtype=DTYPE), torch.arange(u0, u1, dtype=DTYPE), indexing="ij")
    return torch.stack([uu.reshape(-1), vv.reshape(-1)], dim=-1)


def _tile_state(pixels, means2d, conics, opacities, settings: RenderSettings):
    """Per (pixel, splat) opacity terms and transmittances for one tile."""
    d = pixels[:, None, :] - means2d[None, :, :]
    dx, dy = d[..., 0], d[..., 1]
    a, b, c = conics[:, 0], conics[:, 1], conics[:, 2]
    power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
    gauss = torch.exp(power)
    raw = opacities[None, :] * gauss
    clamped = raw > settings.opacity_clamp
    sigma = torch.where(clamped, torch.full_like(raw, settings.opacity_clamp), raw)
    keep = torch.cumprod(1.0 - sigma, dim=1)
    trans_excl = torch.cat([torch.ones_like(keep[:, :1]), keep[:, :-1]], dim=1)
    active = trans_excl >= settings.min_transmittance
    sigma_eff = torch.where(active, sigma, torch.zeros_like(sigma))
    t_final = torch.prod(1.0 - sigma_eff, dim=1)
    weights = sigma_eff * trans_excl
    return dx, dy, gauss, sigma, clamped, trans_excl, active, weights, t_final


def _forward_tile(tile, idx, means2d, conics, opacities, features, background, settings):
    pixels = _tile_pixels(tile)
    if idx.size == 0:
        out = background.expand(pixels.shape[0], -1).clone()
        return out, torch.zeros(pixels.shape[0], dtype=DTYPE)
    sel = torch.as_tensor(idx)
    *_, weights, t_final = _tile_state(pixels, means2d[sel], conics[sel], opacities[sel], settings)
    out = weights @ features[sel] + t_final[:, None] * background[None, :]
    return out, 1.0 - t_final


def _backward_tile(tile, idx, means2d, conics, opacities, features, background, grad_out, grad_alpha,
                   settings):
    """Partial gradients of one tile for (means2d, conics, opacities, features) of its splats."""
    u0, u1, v0, v1 = tile
    pixels = _tile_pixels(tile)
    sel = torch.as_tensor(idx)
    f = features[sel]
    dx, dy, gauss, sigma, clamped, trans_excl, active, weights, t_final = _tile_state(
        pixels, means2d[sel], conics[sel], opacities[sel], settings
    )
    g_out = grad_out[v0:v1, u0:u1].reshape(-1, f.shape[1])
    g_alpha = grad_alpha[v0:v1, u0:u1].reshape(-1)

    grad_features = weights.T @ g_out

    contrib = weights[:, :, None] * f[None, :, :]
    suffix = torch.flip(torch.cumsum(torch.flip(contrib, dims=[1]), dim=1), dims=[1]) - contrib
    behind = suffix + t_final[:, None, None] * background[None, None, :]
    one_minus = 1.0 - sigma
    d_sigma = ((trans_excl[:, :, None] * f[None, :, :] - behind / one_minus[:, :, None]) * g_out[:, None, :]).sum(-1)
    d_sigma = d_sigma + g_alpha[:, None] * t_final[:, None] / one_minus
    d_sigma = torch.where(active & ~clamped, d_sigma, torch.zeros_like(d_sigma))

    conic = conics[sel]
    a, b, c = conic[:, 0], conic[:, 1], conic[:, 2]
    d_power = d_sigma * sigma
    grad_opacities = (d_sigma * gauss).sum(0)
    grad_means = torch.stack([
        (d_power * (a * dx + b * dy)).sum(0),
        (d_power * (b * dx + c * dy)).sum(0),
    ], dim=-1)
    grad_conics = torch.stack([
        (-0.5 * d_power * dx * dx).sum(0),
        (-d_power * dx * dy).sum(0),
        (-0.5 * d_power * dy * dy).sum(0),
    ], dim=-1)
    return grad_means, grad_conics, grad_opacities, grad_features


def _run_tiles(fn, bins: TileBins, threads: int):
    jobs = [(tile, idx) for tile, idx in zip(bins.tiles, bins.splats)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


class _RasterizeSplats(torch.autograd.Function):
    """Compositing with gradients for 2D means, conics, opacities and feature channels."""

    @staticmethod
    def forward(ctx, means2d, conics, opacities, features, background, radius, depths, valid,
                width, height, settings):
        bins = bin_splats(means2d.detach().numpy(), radius.detach().numpy(), depths.detach().numpy(),
                          valid.detach().numpy(), width, height, settings.tile_size)
        channels = features.shape[1]
        out = torch.zeros((height, width, channels), dtype=DTYPE)
        alpha = torch.zeros((height, width), dtype=DTYPE)

        def run(tile, idx):
            return _forward_tile(tile, idx, means2d, conics, opacities, features, background, settings)

        for (u0, u1, v0, v1), (tile_out, tile_alpha) in zip(bins.tiles, _run_tiles(run, bins, settings.threads)):
            out[v0:v1, u0:u1] = tile_out.reshape(v1 - v0, u1 - u0, channels)
            alpha[v0:v1, u0:u1] = tile_alpha.reshape(v1 - v0, u1 - u0)

        ctx.bins = bins
        ctx.settings = settings
        ctx.save_for_backward(means2d, conics, opacities, features, background)
        return out, alpha

    @staticmethod
    def backward(ctx, grad_out, grad_alpha):
        means2d, conics, opacities, features, background = ctx.saved_tensors
        bins, settings = ctx.bins, ctx.settings
        grad_means = torch.zeros_like(means2d)
        grad_conics = torch.zeros_like(conics)
        grad_opacities = torch.zeros_like(opacities)
        grad_features = torch.zeros_like(features)
        grad_out = grad_out.contiguous()
        grad_alpha = grad_alpha.contiguous()

        def run(tile, idx):
            if idx.size == 0:
                return None
            return _backward_tile(tile, idx, means2d, conics, opacities, features, background,
                                  grad_out, grad_alpha, settings)

        # reduce in fixed tile order
        for idx, partial in zip(bins.splats, _run_tiles(run, bins, settings.threads)):
            if partial is None:
                continue
            sel = torch.as_tensor(idx)
            grad_means[sel] += partial[0]
            grad_conics[sel] += partial[1]
            grad_opacities[sel] += partial[2]
            grad_features[sel] += partial[3]
        return grad_means, grad_conics, grad_opacities, grad_features, None, None, None, None, None, None, None


def composite(means2d: torch.Tensor, conics: torch.Tensor, opacities: torch.Tensor, features: torch.Tensor,
              background: torch.Tensor, radius: torch.Tensor, depths: torch.Tensor, valid: torch.Tensor,
              width: int, height: int, settings: Optional[RenderSettings] = None):
    """
    Differentiable compositing of N splats carrying C feature channels.

    Returns:
        (features image (H, W, C), alpha (H, W))
    """
    settings = settings or RenderSettings()
    return _RasterizeSplats.apply(means2d, conics, opacities, features, background.to(DTYPE),
                                  radius, depths.detach(), valid, int(width), int(height), settings)


def rasterize(splats: Sequence[Splat2D], resolution: Tuple[int, int], background=(0.0, 0.0, 0.0),
              settings: Optional[RenderSettings] = None) -> RenderedImage:
    """
    Composite pre-projected splats.

    Args:
        splats: Splat2D list (any order)
        resolution: (W, H)
        background: RGB

    Returns:
        RenderedImage
    """
    settings = settings or RenderSettings()
    width, height = resolution
    background = torch.as_tensor(np.asarray(background, dtype=np.float64))
    if not splats:
        color = background.expand(height, width, 3).clone()
        zeros = torch.zeros((height, width), dtype=DTYPE)
        return RenderedImage(color, zeros, zeros.clone())

    means2d = torch.as_tensor(np.stack([s.mean2d for s in splats]), dtype=DTYPE)
    cov2d = np.stack([np.asarray(s.cov2d, dtype=np.float64) for s in splats])
    if not (np.all(np.isfinite(cov2d)) and torch.isfinite(means2d).all()):
        raise ValueError("Splats must be finite")
    conics = torch.as_tensor(np.stack([s.conic for s in splats]), dtype=DTYPE)
    opacities = torch.as_tensor([s.opacity for s in splats], dtype=DTYPE)
    depths = torch.as_tensor([s.depth for s in splats], dtype=DTYPE)
    features = torch.cat([torch.as_tensor(np.stack([s.color for s in splats]), dtype=DTYPE), depths[:, None]], dim=1)
    eig_max = np.linalg.eigvalsh(cov2d)[:, -1]
    radius = torch.as_tensor(settings.radius_sigmas * np.sqrt(np.maximum(eig_max, 0.0)), dtype=DTYPE)
    valid = torch.ones(len(splats), dtype=torch.bool)

    with torch.no_grad():
        image, alpha = composite(means2d, conics, opacities, features, torch.cat([background, torch.zeros(1, dtype=DTYPE)]),
                                 radius, depths, valid, width, height, settings)
    return RenderedImage(image[..., :3], alpha, expected_depth(image[..., 3], alpha))


def expected_depth(depth_sum: torch.Tensor, alpha: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Σ w_i z_i / alpha where alpha > eps, else 0."""
    safe = torch.where(alpha > eps, alpha, torch.ones_like(alpha))
    return torch.where(alpha > eps, depth_sum / safe, torch.zeros_like(alpha))
