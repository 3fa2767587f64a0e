"""
Losses, ARAP regularization and the optimization loop.
"""

from .optim_schema import LossConfig, OptimizeSettings, default_learning_rates
from .losses import (
    arap_loss,
    ssim_map,
    render_losses,
    total_loss,
    check_finite,
    OptimizationError,
    ShapeMismatchError,
    NonFiniteLossError,
)
from .optimizer import TrainingData, OptimizeResult, MotionOptimizer, arap_pairs, optimize

__all__ = [
    "LossConfig",
    "OptimizeSettings",
    "default_learning_rates",
    "arap_loss",
    "ssim_map",
    "render_losses",
    "total_loss",
    "check_finite",
    "OptimizationError",
    "ShapeMismatchError",
    "NonFiniteLossError",
    "TrainingData",
    "OptimizeResult",
    "MotionOptimizer",
    "arap_pairs",
    "optimize",
]
