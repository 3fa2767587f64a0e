"""
Pipeline configuration: every stage's settings in one JSON document.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

from src.backend.core.initialization.init_schema import InitConfig
from src.backend.core.metrics.metrics_schema import EvalSettings
from src.backend.core.optim.optim_schema import LossConfig, OptimizeSettings
from src.backend.core.render.render_schema import RenderSettings
from src.backend.core.synth.synth_schema import PRESETS, SyntheticSceneSpec, SyntheticTrackerSpec
from src.backend.core.tracking.tracking_schema import TrackerConfig, TrackingMode

load_dotenv()


def _default_workspace() -> str:
    return os.getenv("GS360_WORKSPACE", "runs/default")


def _default_threads() -> int:
    return int(os.getenv("GS360_THREADS", "1"))


class PipelineConfig(BaseModel):
    """End-to-end reconstruction run"""
    preset: Optional[str] = Field(default="rotator", description="Synthetic preset applied under `scene`; null uses `scene` as given")
    scene: Dict[str, Any] = Field(default_factory=dict, description="SyntheticSceneSpec overrides (applied on top of the preset)")
    tracker_backend: SyntheticTrackerSpec = Field(default_factory=SyntheticTrackerSpec, description="Scripted tracker noise model")
    tracking: TrackerConfig = Field(default_factory=TrackerConfig, description="Anchor tracking settings")
    init: InitConfig = Field(default_factory=InitConfig, description="Initialization settings")
    loss: LossConfig = Field(default_factory=LossConfig, description="Loss weights")
    optimize: OptimizeSettings = Field(default_factory=OptimizeSettings, description="Optimizer settings")
    render: RenderSettings = Field(default_factory=RenderSettings, description="Rasterizer settings")
    eval: EvalSettings = Field(default_factory=EvalSettings, description="Evaluation protocol")
    ablation: TrackingMode = Field(default=TrackingMode.FULL, description="full | no_anchor | no_3d_init")
    bundle_dir: Optional[str] = Field(default=None, description="Input scene bundle; defaults to <workspace>/bundle")
    workspace: str = Field(default_factory=_default_workspace, description="Output directory (env GS360_WORKSPACE)")
    seed: int = Field(default=0, description="Run seed; overrides every stage seed")
    threads: int = Field(default_factory=_default_threads, ge=1, description="Worker threads in tracking, rendering and scene generation (env GS360_THREADS)")
    bullet_time_views: int = Field(default=8, ge=0, description="Viewpoints of the bullet-time sweep")
    use_prefect: bool = Field(default=True, description="Run `all` as a Prefect flow")

    @field_validator("preset")
    @classmethod
    def check_preset(cls, value):
        if value is not None and value not in PRESETS:
            raise ValueError(f"Unknown preset '{value}'; available: {sorted(PRESETS)}")
        return value

    @field_validator("scene")
    @classmethod
    def check_scene(cls, value):
        SyntheticSceneSpec(**value)
        return value

    @property
    def workspace_path(self) -> Path:
        return Path(self.workspace)

    @property
    def bundle_path(self) -> Path:
        return Path(self.bundle_dir) if self.bundle_dir else self.workspace_path / "bundle"

    def scene_spec(self) -> SyntheticSceneSpec:
        base = dict(PRESETS[self.preset]) if self.preset else {}
        return SyntheticSceneSpec(**{**base, **self.scene, "seed": self.seed})

    def tracker_spec(self) -> SyntheticTrackerSpec:
        return self.tracker_backend.model_copy(update={"seed": self.seed})

    def init_config(self) -> InitConfig:
        return self.init.model_copy(update={"seed": self.seed})

    def render_settings(self) -> RenderSettings:
        return self.render.model_copy(update={"threads": self.threads})

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        """
        Load a JSON config; keyword overrides win over file values.

        Raises:
            ValueError: If the file cannot be read or parsed
            ValidationError: On invalid values
        """
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ValueError(f"Cannot read config {path}: {e}")
        return cls(**{**data, **overrides})


def describe_defaults(model: type = PipelineConfig) -> Dict[str, Any]:
    """
    Nested {field: {"default": ..., "description": ...}} dump of a config model.
    """
    out = {}
    instance = model()
    for name, info in model.model_fields.items():
        value = getattr(instance, name)
        if isinstance(value, BaseModel):
            out[name] = {"description": info.description, "fields": describe_defaults(type(value))}
        else:
            dumped = value.value if hasattr(value, "value") else value
            out[name] = {"default": json.loads(json.dumps(dumped, default=str)), "description": info.description}
            if model is PipelineConfig and name == "scene":
                out[name]["fields"] = describe_defaults(SyntheticSceneSpec)
    return out
