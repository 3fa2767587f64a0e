"""
Analytic synthetic scenes: ray-cast textured objects under scripted rigid motion, seen by a
camera moving along an arc, with exact depth and ground-truth point trajectories.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.backend.core.geometry import Camera, DepthMap, SE3Transform
from src.backend.core.tracking.lifting import visibility_mask
from src.backend.core.tracking.tracking_schema import QuerySet, Trajectory3D
from src.backend.utils.rng import stage_rng
from .synth_schema import ObjectKind, SyntheticSceneSpec

logger = logging.getLogger(__name__)

WORLD_UP = np.array([0.0, 0.0, 1.0])
VIS_TOL = 0.02

BOX_PALETTE = np.array([
    [0.90, 0.25, 0.20], [0.20, 0.70, 0.30], [0.25, 0.35, 0.90],
    [0.95, 0.80, 0.20], [0.80, 0.30, 0.85], [0.20, 0.80, 0.85],
])
SPHERE_PALETTE = np.array([
    [0.90, 0.40, 0.20], [0.30, 0.75, 0.35], [0.30, 0.40, 0.90], [0.90, 0.85, 0.30],
])


@dataclass(frozen=True)
class Part:
    """One rigid piece of the object, described in its own local frame."""

    kind: str
    half_extents: np.ndarray
    offset: np.ndarray
    palette_shift: int = 0

    def area(self) -> float:
        if self.kind == "sphere":
            return float(4.0 * np.pi * self.half_extents[0] ** 2)
        hx, hy, hz = self.half_extents
        return float(8.0 * (hx * hy + hy * hz + hx * hz))


@dataclass
class HeldOutView:
    """Static camera at an angular offset from the arc center, rendered at every frame."""

    offset_deg: float
    cam: Camera
    frames: List[np.ndarray] = field(default_factory=list)
    masks: List[np.ndarray] = field(default_factory=list)
    depths: List[DepthMap] = field(default_factory=list)


@dataclass
class SyntheticScene:
    """
    Everything generated for one spec.

    Attributes:
        spec: Generating spec
        frames: T images (H, W, 3) in [0, 1]
        depths: T exact z-depth maps (valid on the object)
        masks: T object masks (H, W)
        cams: T training cameras
        gt_tracks: Ground-truth trajectories with visibility and pixel positions
        part_ids: (P,) rigid part each tracked point belongs to
        part_motions: part_motions[k][t] maps part k's local frame to the world at frame t
        held_out: Held-out views
    """

    spec: SyntheticSceneSpec
    frames: List[np.ndarray]
    depths: List[DepthMap]
    masks: List[np.ndarray]
    cams: List[Camera]
    gt_tracks: List[Trajectory3D]
    part_ids: np.ndarray
    part_motions: List[List[SE3Transform]]
    held_out: List[HeldOutView] = field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def diameter(self) -> float:
        """Largest distance between two ground-truth points at the first frame."""
        points = np.stack([tr.positions[0] for tr in self.gt_tracks])
        extent = points.max(axis=0) - points.min(axis=0)
        return float(np.linalg.norm(extent))


def object_parts(spec: SyntheticSceneSpec) -> List[Part]:
    """Rigid parts of the scene spec's object."""
    s = spec.size
    if spec.object == ObjectKind.CUBE:
        return [Part("box", np.full(3, s / 2.0), np.zeros(3))]
    if spec.object == ObjectKind.SPHERE:
        return [Part("sphere", np.full(3, s / 2.0), np.zeros(3))]
    if spec.object == ObjectKind.ARTICULATED:
        body = Part("box", np.array([s / 4.0, s / 6.0, s / 6.0]), np.array([-s / 4.0, 0.0, 0.0]))
        arm = Part("box", np.array([s / 4.0, s / 8.0, s / 8.0]), np.array([s / 4.0, 0.0, 0.0]), palette_shift=3)
        return [body, arm]
    raise UnsupportedSpecError(f"Unsupported object '{spec.object}'")


def _phase(spec: SyntheticSceneSpec, t: int) -> float:
    return t / (spec.frames - 1)


def object_motion(spec: SyntheticSceneSpec, t: int) -> SE3Transform:
    """Whole-object transform at frame t: linear rotation about world z plus linear translation."""
    phase = _phase(spec, t)
    angle = np.deg2rad(spec.rotation_deg) * phase
    return SE3Transform.from_axis_angle(WORLD_UP, angle, np.asarray(spec.translation) * phase)


def hinge_angle(spec: SyntheticSceneSpec, t: int) -> float:
    """Arm angle (radians); zero at the first frame."""
    return float(np.deg2rad(spec.hinge_deg) * np.sin(2.0 * np.pi * spec.hinge_cycles * _phase(spec, t)))


def part_motions(spec: SyntheticSceneSpec) -> List[List[SE3Transform]]:
    """Per part, per frame, local-to-world transforms."""
    body = [object_motion(spec, t) for t in range(spec.frames)]
    if spec.object != ObjectKind.ARTICULATED:
        return [body]
    arm = [body[t].compose(SE3Transform.from_axis_angle(WORLD_UP, hinge_angle(spec, t)))
           for t in range(spec.frames)]
    return [body, arm]


def arc_camera(spec: SyntheticSceneSpec, azimuth_deg: float) -> Camera:
    """Camera on the circle of the scene spec's radius and height, looking at the origin."""
    width, height = spec.resolution
    az = np.deg2rad(azimuth_deg)
    eye = np.array([spec.radius * np.cos(az), spec.radius * np.sin(az), spec.height])
    focal = spec.focal_scale * width
    return Camera.look_at(eye, np.zeros(3), WORLD_UP, focal, focal,
                          (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def training_cameras(spec: SyntheticSceneSpec) -> List[Camera]:
    """One camera per frame, sweeping the arc linearly."""
    start = spec.arc_center_deg - spec.arc_deg / 2.0
    return [arc_camera(spec, start + spec.arc_deg * _phase(spec, t)) for t in range(spec.frames)]


def _camera_rays(cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """World ray origin (3,) and (H*W, 3) directions whose camera-frame z is 1."""
    v, u = np.mgrid[0:cam.height, 0:cam.width]
    local = np.stack([(u.ravel() - cam.cx) / cam.fx, (v.ravel() - cam.cy) / cam.fy,
                      np.ones(u.size)], axis=1)
    return cam.center, local @ cam.pose.rotation_matrix.T


def _intersect_box(origin: np.ndarray, dirs: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Ray parameter of the first hit with an axis-aligned box centered at 0 (inf on miss)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - origin) / dirs
        t2 = (half - origin) / dirs
    parallel = dirs == 0
    inside_slab = np.abs(origin) <= half
    lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    near = lo.max(axis=1)
    far = hi.min(axis=1)
    hit = (near <= far) & (near > 0)
    return np.where(hit, near, np.inf)


def _intersect_sphere(origin: np.ndarray, dirs: np.ndarray, radius: float) -> np.ndarray:
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * np.einsum("ij,ij->i", dirs, origin)
    c = np.einsum("ij,ij->i", origin, origin) - radius ** 2
    disc = b * b - 4.0 * a * c
    root = np.sqrt(np.maximum(disc, 0.0))
    s = (-b - root) / (2.0 * a)
    return np.where((disc >= 0) & (s > 0), s, np.inf)


def _texture(part: Part, points: np.ndarray, cells: int) -> np.ndarray:
    """Procedural checker colors at (M, 3) part-local surface points."""
    if part.kind == "sphere":
        radius = part.half_extents[0]
        azimuth = np.arctan2(points[:, 1], points[:, 0]) + np.pi
        polar = np.arccos(np.clip(points[:, 2] / radius, -1.0, 1.0))
        a = np.floor(azimuth / (2.0 * np.pi) * 2 * cells).astype(int)
        b = np.floor(polar / np.pi * cells).astype(int)
        base = SPHERE_PALETTE[(points[:, 2] > 0).astype(int) * 2 + (points[:, 0] > 0).astype(int)]
    else:
        scaled = points / part.half_extents
        axis = np.argmax(np.abs(scaled), axis=1)
        sign = np.take_along_axis(scaled, axis[:, None], axis=1)[:, 0] > 0
        face = (axis * 2 + sign.astype(int) + part.palette_shift) % len(BOX_PALETTE)
        other = np.stack([(axis + 1) % 3, (axis + 2) % 3], axis=1)
        coords = np.take_along_axis(np.clip((scaled + 1.0) / 2.0, 0.0, 1.0 - 1e-9), other, axis=1)
        a = np.floor(coords[:, 0] * cells).astype(int)
        b = np.floor(coords[:, 1] * cells).astype(int)
        base = BOX_PALETTE[face]
    checker = ((a + b) % 2).astype(np.float64)
    return base * (0.45 + 0.55 * checker[:, None])


def ray_cast(cam: Camera, parts: Sequence[Part], motions: Sequence[SE3Transform], cells: int,
             background: Sequence[float]) -> Tuple[np.ndarray, DepthMap, np.ndarray]:
    """
    Render one view of the posed parts.

    Returns:
        (image (H, W, 3), exact depth, mask (H, W))
    """
    origin, dirs = _camera_rays(cam)
    best = np.full(dirs.shape[0], np.inf)
    owner = np.full(dirs.shape[0], -1)
    local_hits = np.zeros_like(dirs)
    for index, (part, motion) in enumerate(zip(parts, motions)):
        rot = motion.rotation_matrix
        local_origin = rot.T @ (origin - motion.translation) - part.offset
        local_dirs = dirs @ rot
        if part.kind == "sphere":
            s = _intersect_sphere(np.broadcast_to(local_origin, dirs.shape), local_dirs, part.half_extents[0])
        else:
            s = _intersect_box(local_origin[None, :], local_dirs, part.half_extents)
        closer = s < best
        best = np.where(closer, s, best)
        owner = np.where(closer, index, owner)
        local_hits[closer] = local_origin + s[closer, None] * local_dirs[closer]

    hit = np.isfinite(best)
    colors = np.tile(np.asarray(background, dtype=np.float64), (dirs.shape[0], 1))
    for index, part in enumerate(parts):
        rows = hit & (owner == index)
        if rows.any():
            colors[rows] = _texture(part, local_hits[rows], cells)

    shape = (cam.height, cam.width)
    depth = DepthMap(np.where(hit, best, 0.0).reshape(shape), hit.reshape(shape))
    return colors.reshape(cam.height, cam.width, 3), depth, hit.reshape(shape)


def sample_surface_points(parts: Sequence[Part], count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Uniform area-weighted samples on the object surface.

    Returns:
        (points (count, 3) in part-local coordinates including the part offset, part ids (count,))
    """
    rng = stage_rng(seed, "synth_points")
    areas = np.array([p.area() for p in parts])
    part_ids = np.sort(rng.choice(len(parts), size=count, p=areas / areas.sum()))
    points = np.zeros((count, 3))
    for index, part in enumerate(parts):
        rows = np.flatnonzero(part_ids == index)
        if rows.size == 0:
            continue
        if part.kind == "sphere":
            v = rng.normal(size=(rows.size, 3))
            local = part.half_extents[0] * v / np.linalg.norm(v, axis=1, keepdims=True)
        else:
            h = part.half_extents
            face_areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
            faces = rng.choice(6, size=rows.size, p=face_areas / face_areas.sum())
            local = rng.uniform(-1.0, 1.0, size=(rows.size, 3)) * h
            axis = faces // 2
            sign = np.where(faces % 2 == 0, -1.0, 1.0)
            local[np.arange(rows.size), axis] = sign * h[axis]
        points[rows] = local + part.offset
    return points, part_ids


def _render_views(cams: Sequence[Camera], parts, motions_per_frame, spec, threads: int):
    def job(t):
        return ray_cast(cams[t], parts, motions_per_frame[t], spec.checker_cells, spec.background)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, range(len(cams))))
    return [job(t) for t in range(len(cams))]


def generate_scene(spec: SyntheticSceneSpec, threads: int = 1) -> SyntheticScene:
    """
    Render the scene spec's sequence and its ground truth.

    Args:
        spec: Scene description
        threads: Worker threads across frames (results do not depend on it)

    Returns:
        SyntheticScene

    Raises:
        UnsupportedSpecError: If the object or camera setup cannot be generated
    """
    try:
        parts = object_parts(spec)
        motions = part_motions(spec)
        cams = training_cameras(spec)
    except UnsupportedSpecError:
        raise
    except Exception as e:
        logger.error(f"Cannot build scene geometry: {e}")
        raise UnsupportedSpecError(f"Cannot build scene geometry: {e}")

    per_frame = [[motions[k][t] for k in range(len(parts))] for t in range(spec.frames)]
    rendered = _render_views(cams, parts, per_frame, spec, threads)
    frames = [r[0] for r in rendered]
    depths = [r[1] for r in rendered]
    masks = [r[2] for r in rendered]

    local, part_ids = sample_surface_points(parts, spec.num_points, spec.seed)
    positions = np.zeros((spec.num_points, spec.frames, 3))
    for k in range(len(parts)):
        rows = np.flatnonzero(part_ids == k)
        for t in range(spec.frames):
            positions[rows, t] = motions[k][t].apply(local[rows])

    visibility = np.zeros((spec.num_points, spec.frames), dtype=bool)
    pixels = np.zeros((spec.num_points, spec.frames, 2))
    for t in range(spec.frames):
        visibility[:, t] = visibility_mask(positions[:, t], depths[t], cams[t], VIS_TOL)
        pixels[:, t] = cams[t].project_points(positions[:, t])[0]

    gt_tracks = [Trajectory3D(point_id=i, positions=positions[i], visibility=visibility[i],
                              confidence=visibility[i].astype(np.float64), mask=visibility[i], pixels=pixels[i])
                 for i in range(spec.num_points)]

    held_out = []
    for offset in spec.held_out_deg:
        cam = arc_camera(spec, spec.arc_center_deg + offset)
        views = _render_views([cam] * spec.frames, parts, per_frame, spec, threads)
        held_out.append(HeldOutView(offset, cam, [v[0] for v in views], [v[2] for v in views], [v[1] for v in views]))

    logger.info(f"Generated {spec.object.value} scene: {spec.frames} frames at {spec.resolution}, "
                f"{spec.num_points} tracked points, {int(visibility.sum())} visible point-frames, "
                f"{len(held_out)} held-out views")
    return SyntheticScene(spec, frames, depths, masks, cams, gt_tracks, part_ids, motions, held_out)


def make_queries(gt_tracks: Sequence[Trajectory3D]) -> QuerySet:
    """
    One query per point at its first visible frame; never-visible points are skipped.
    """
    ids, frames, pixels = [], [], []
    for track in gt_tracks:
        visible = np.flatnonzero(track.visibility)
        if visible.size == 0:
            continue
        t = int(visible[0])
        ids.append(track.point_id)
        frames.append(t)
        pixels.append(track.pixels[t])
    return QuerySet(np.array(ids, dtype=np.int64), np.array(frames, dtype=np.int64),
                    np.array(pixels, dtype=np.float64).reshape(-1, 2))


def occlusion_runs(visibility: np.ndarray) -> np.ndarray:
    """Longest run of consecutive occluded frames per point; (P, T) -> (P,)."""
    visibility = np.asarray(visibility, dtype=bool)
    longest = np.zeros(visibility.shape[0], dtype=np.int64)
    current = np.zeros(visibility.shape[0], dtype=np.int64)
    for t in range(visibility.shape[1]):
        current = np.where(visibility[:, t], 0, current + 1)
        longest = np.maximum(longest, current)
    return longest


# CUSTOM EXCEPTIONS
class SynthError(Exception):
    """Base exception for synthetic scene errors."""
    pass

class UnsupportedSpecError(SynthError):
    """The scene spec asks for something the generator cannot produce."""
    pass
