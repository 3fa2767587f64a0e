from .reconstruction_flow import STAGE_ORDER, reconstruction_flow, run_pipeline, run_stage

__all__ = ["STAGE_ORDER", "reconstruction_flow", "run_pipeline", "run_stage"]
