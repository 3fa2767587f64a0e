"""
Synthetic scene and scripted tracker specifications, plus named presets.
"""

from enum import Enum
from typing import Dict, List, Tuple

from pydantic import BaseModel, Field, field_validator


class ObjectKind(str, Enum):
    """Analytic objects the generator can ray-cast."""
    CUBE = "cube"
    SPHERE = "sphere"
    ARTICULATED = "articulated"


class SyntheticSceneSpec(BaseModel):
    """Scripted object motion observed by a camera moving along an arc"""
    object: ObjectKind = Field(default=ObjectKind.CUBE, description="Object to render")
    size: float = Field(default=1.0, gt=0.0, description="Cube edge / sphere diameter / body length (scene units)")
    rotation_deg: float = Field(default=360.0, description="Total object rotation about the world z axis over the sequence")
    translation: Tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="Total object translation over the sequence")
    hinge_deg: float = Field(default=0.0, description="Peak hinge angle of the articulated arm")
    hinge_cycles: float = Field(default=1.0, ge=0.0, description="Hinge oscillations over the sequence")
    frames: int = Field(default=32, ge=2, description="Sequence length T")
    resolution: Tuple[int, int] = Field(default=(64, 64), description="Image (W, H)")
    focal_scale: float = Field(default=1.2, gt=0.0, description="Focal length as a multiple of the image width")
    arc_deg: float = Field(default=60.0, gt=0.0, le=360.0, description="Angular extent of the training camera arc")
    arc_center_deg: float = Field(default=0.0, description="Azimuth of the arc center")
    radius: float = Field(default=3.0, gt=0.0, description="Camera distance from the z axis")
    height: float = Field(default=1.0, description="Camera height above the object center")
    held_out_deg: List[float] = Field(default_factory=lambda: [120.0], description="Held-out camera azimuths relative to the arc center")
    num_points: int = Field(default=512, ge=1, description="Ground-truth surface points tracked")
    checker_cells: int = Field(default=4, ge=1, description="Checker cells across one face")
    background: Tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="Background RGB")
    seed: int = Field(default=0, description="Seed of surface point sampling")

    @field_validator("resolution")
    @classmethod
    def check_resolution(cls, value):
        if value[0] < 1 or value[1] < 1:
            raise ValueError(f"Resolution must be positive, got {value}")
        return value

    @field_validator("held_out_deg")
    @classmethod
    def check_offsets(cls, value):
        for offset in value:
            if not 0.0 < abs(offset) <= 360.0:
                raise ValueError(f"Held-out offsets must lie in (0, 360] degrees, got {offset}")
        return value


class SyntheticTrackerSpec(BaseModel):
    """Noise model of the scripted tracker backends"""
    noise_sigma_2d: float = Field(default=0.5, ge=0.0, description="2D pixel noise standard deviation")
    noise_sigma_3d: float = Field(default=0.005, ge=0.0, description="3D position noise standard deviation (scene units)")
    drift_rate: float = Field(default=0.01, ge=0.0, description="3D drift per frame since window start (scene units)")
    occlusion_conf: float = Field(default=0.1, ge=0.0, lt=0.5, description="Confidence reported on occluded frames")
    seed: int = Field(default=0, description="Seed of tracker noise")


PRESETS: Dict[str, Dict] = {
    "rotator": dict(object=ObjectKind.CUBE, rotation_deg=360.0, frames=64, arc_deg=60.0, held_out_deg=[120.0]),
    "static": dict(object=ObjectKind.SPHERE, rotation_deg=0.0, frames=16, arc_deg=90.0, held_out_deg=[90.0]),
    "articulated": dict(object=ObjectKind.ARTICULATED, size=1.6, rotation_deg=90.0, hinge_deg=60.0,
                        frames=32, arc_deg=60.0, held_out_deg=[90.0]),
}


def preset_spec(name: str, **overrides) -> SyntheticSceneSpec:
    """
    Build a named preset.

    Raises:
        UnsupportedSpecError: If the preset is unknown
    """
    from .scene_generator import UnsupportedSpecError

    if name not in PRESETS:
        raise UnsupportedSpecError(f"Unknown preset '{name}'; available: {sorted(PRESETS)}")
    return SyntheticSceneSpec(**{**PRESETS[name], **overrides})
