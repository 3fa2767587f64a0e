"""
Reconstruction flow using Prefect: synthesis, tracking, initialization, optimization, rendering
and evaluation, followed by the run manifest.
"""

import logging
from typing import Any, Dict, List, Optional

from prefect import flow

from src.backend.core.pipelines.reconstruction.core.stages import (
    ReconstructionStages,
    eval_task,
    init_task,
    optimize_task,
    render_task,
    synth_task,
    track_task,
)
from src.backend.core.pipelines.reconstruction.pipeline_schema import PipelineConfig

logger = logging.getLogger(__name__)

STAGE_ORDER = ("synth", "track", "init", "optimize", "render", "eval")


def _stage_methods(stages: ReconstructionStages):
    return {
        "synth": stages.synthesize,
        "track": stages.track,
        "init": stages.initialize,
        "optimize": stages.optimize,
        "render": stages.render,
        "eval": stages.evaluate,
    }


def run_stage(config: PipelineConfig, stage: str) -> Dict[str, Any]:
    """
    Run one stage outside Prefect and refresh the manifest.

    Raises:
        StageError: If the stage fails
        ValueError: If the stage name is unknown
    """
    if stage not in STAGE_ORDER:
        raise ValueError(f"Unknown stage '{stage}'; expected one of {STAGE_ORDER}")
    stages = ReconstructionStages(config)
    summary = _stage_methods(stages)[stage]()
    stages.write_summary([summary])
    stages.write_manifest()
    return summary


@flow(name="reconstruction-flow")
def reconstruction_flow(config: PipelineConfig, synthesize: bool = True) -> Dict[str, Any]:
    """
    Complete reconstruction run as Prefect tasks.

    Args:
        config: Pipeline configuration
        synthesize: Generate the scene bundle first (skip when an external bundle is given)

    Returns:
        Dict with per-stage summaries and the manifest path
    """
    stages = ReconstructionStages(config)
    summaries: List[Dict[str, Any]] = []
    if synthesize:
        summaries.append(synth_task(stages))
    summaries.append(track_task(stages))
    summaries.append(init_task(stages))
    summaries.append(optimize_task(stages))
    summaries.append(render_task(stages))
    summaries.append(eval_task(stages))
    stages.write_summary(summaries)
    manifest = stages.write_manifest()
    return {"stages": summaries, "manifest": str(manifest)}


def run_pipeline(config: PipelineConfig, synthesize: Optional[bool] = None) -> Dict[str, Any]:
    """
    Every stage in order; through Prefect unless the config disables it.

    Args:
        config: Pipeline configuration
        synthesize: Defaults to True unless an external bundle_dir is configured
    """
    if synthesize is None:
        synthesize = config.bundle_dir is None
    if config.use_prefect:
        return reconstruction_flow(config, synthesize)

    stages = ReconstructionStages(config)
    methods = _stage_methods(stages)
    order = STAGE_ORDER if synthesize else STAGE_ORDER[1:]
    summaries = [methods[name]() for name in order]
    stages.write_summary(summaries)
    manifest = stages.write_manifest()
    logger.info(f"Pipeline finished; manifest at {manifest}")
    return {"stages": summaries, "manifest": str(manifest)}
