from .stages import (
    ReconstructionStages,
    PipelineError,
    StageError,
    synth_task,
    track_task,
    init_task,
    optimize_task,
    render_task,
    eval_task,
)

__all__ = [
    "ReconstructionStages",
    "PipelineError",
    "StageError",
    "synth_task",
    "track_task",
    "init_task",
    "optimize_task",
    "render_task",
    "eval_task",
]
