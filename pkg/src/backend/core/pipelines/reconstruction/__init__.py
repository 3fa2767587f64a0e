"""
End-to-end reconstruction pipeline.
"""

from .pipeline_schema import PipelineConfig, describe_defaults

__all__ = ["PipelineConfig", "describe_defaults"]
