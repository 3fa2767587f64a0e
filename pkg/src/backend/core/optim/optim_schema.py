"""
Loss weights and optimization settings.
"""

from typing import Dict

from pydantic import BaseModel, Field


class LossConfig(BaseModel):
    """Weights of the total reconstruction loss"""
    lambda_rgb: float = Field(default=1.0, ge=0.0, allow_inf_nan=False, description="Photometric term weight")
    lambda_mask: float = Field(default=0.5, ge=0.0, allow_inf_nan=False, description="Alpha-vs-mask term weight")
    lambda_depth: float = Field(default=0.5, ge=0.0, allow_inf_nan=False, description="Depth term weight")
    lambda_2dtrack: float = Field(default=1.0, ge=0.0, allow_inf_nan=False, description="2D track reprojection term weight")
    lambda_arap: float = Field(default=0.1, ge=0.0, allow_inf_nan=False, description="ARAP regularizer weight")
    w1: float = Field(default=1.0, ge=0.0, allow_inf_nan=False, description="ARAP pairwise-distance weight")
    w2: float = Field(default=1.0, ge=0.0, allow_inf_nan=False, description="ARAP local-coordinate weight")
    ssim_weight: float = Field(default=0.2, ge=0.0, le=1.0, description="D-SSIM share inside the RGB term")

    def weights(self) -> Dict[str, float]:
        return {
            "rgb": self.lambda_rgb,
            "mask": self.lambda_mask,
            "depth": self.lambda_depth,
            "track2d": self.lambda_2dtrack,
            "arap": self.lambda_arap,
        }


def default_learning_rates() -> Dict[str, float]:
    return {
        "means": 1e-3,
        "scales": 1e-3,
        "rotations": 1e-3,
        "opacities": 1e-2,
        "sh": 5e-3,
        "basis_quats": 1e-3,
        "basis_trans": 1e-3,
        "node_coefficients": 1e-3,
        "node_positions": 1e-4,
        "child_quats": 1e-3,
        "child_trans": 1e-3,
        "leaf_coefficients": 1e-3,
        "leaf_positions": 1e-4,
    }


class OptimizeSettings(BaseModel):
    """Optimization loop parameters"""
    iterations: int = Field(default=500, ge=0, description="Optimizer steps")
    learning_rates: Dict[str, float] = Field(default_factory=default_learning_rates,
                                             description="Adam learning rate per parameter group")
    mean_lr_final_ratio: float = Field(default=0.1, gt=0.0, le=1.0,
                                       description="Exponential decay of the mean learning rate reaches this ratio at the last step")
    frame_pairs: int = Field(default=16, ge=1, description="Random frame pairs per ARAP evaluation")
    arap_k: int = Field(default=8, ge=1, description="Nearest same-cluster nodes forming ARAP pairs")
    min_scale: float = Field(default=1e-4, gt=0.0, description="Lower clamp of Gaussian scales after each step")
    min_opacity: float = Field(default=1e-4, gt=0.0, le=1.0, description="Lower clamp of opacities after each step")
    log_every: int = Field(default=50, ge=1, description="Iterations between progress log lines")
    wandb: bool = Field(default=False, description="Mirror the loss history to Weights & Biases")
    wandb_project: str = Field(default="gs360-recon", description="Weights & Biases project name")
