"""
Test configuration and fixtures for pytest.
Sets up small synthetic scenes, random rigid motions and pipeline configs shared by the suites.
"""

import os
import numpy as np
import pytest

os.environ.setdefault("WANDB_MODE", "disabled")

from src.backend.core.geometry import Camera
from src.backend.core.pipelines.reconstruction.pipeline_schema import PipelineConfig
from src.backend.core.render import configure_torch
from src.backend.core.synth import SyntheticSceneSpec, generate_scene, preset_spec


@pytest.fixture(scope="session", autouse=True)
def single_torch_thread():
    """Fixed reduction order for every test."""
    configure_torch()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_spec() -> SyntheticSceneSpec:
    """Small rotating cube: 8 frames at 24x24."""
    return SyntheticSceneSpec(object="cube", frames=8, resolution=(24, 24), rotation_deg=90.0,
                              arc_deg=30.0, num_points=96, held_out_deg=[120.0], seed=0)


@pytest.fixture(scope="session")
def tiny_scene(tiny_spec):
    return generate_scene(tiny_spec)


@pytest.fixture(scope="session")
def rotator_scene():
    """The `rotator` preset at its native 64 frames."""
    return generate_scene(preset_spec("rotator"))


@pytest.fixture
def test_camera() -> Camera:
    """32x32 camera three units from the origin looking along +y."""
    return Camera.look_at([0.0, -3.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0],
                          40.0, 40.0, 15.5, 15.5, 32, 32)


@pytest.fixture
def pipeline_config(tmp_path) -> PipelineConfig:
    """A rotator run small enough for integration tests."""
    return PipelineConfig(
        preset="rotator",
        scene={"frames": 10, "resolution": [24, 24], "num_points": 96, "held_out_deg": [120.0]},
        tracking={"window_len": 6, "window_stride": 3},
        init={"n_trajectories": 96, "n_clusters": 2, "n_nodes": 12, "k_neighbors": 3},
        optimize={"iterations": 3, "frame_pairs": 2, "log_every": 1},
        eval={"frame_stride": 3},
        workspace=str(tmp_path / "run"),
        threads=1,
        bullet_time_views=2,
        use_prefect=False,
    )

