"""
Initialization configuration.
"""

from typing import Optional

from pydantic import BaseModel, Field, model_validator


class InitConfig(BaseModel):
    """Trajectory sampling, velocity clustering and node sampling parameters"""
    n_trajectories: int = Field(default=2048, ge=1, description="Trajectories sampled for Gaussian initialization (N)")
    n_clusters: int = Field(default=8, ge=1, description="Velocity clusters, one motion basis each (B = M)")
    n_nodes: int = Field(default=128, ge=1, description="First-level motion nodes (n1)")
    seed: int = Field(default=0, description="Seed of every initialization random stream")
    density_k: int = Field(default=8, ge=1, description="Neighbour rank used as inverse local density in node sampling")
    k_neighbors: int = Field(default=4, ge=1, description="Leaf nodes each Gaussian interpolates (K)")
    rbf_radius: Optional[float] = Field(default=None, gt=0.0, description="Interpolation RBF radius; median node spacing when unset")
    basis_rbf_sigma: Optional[float] = Field(
        default=None, gt=0.0,
        description="Mix nodes over bases by distance to cluster centers with this RBF width; one-hot when unset",
    )
    second_level: bool = Field(default=False, description="Add a second node level under every first-level node")
    n_children: int = Field(default=4, ge=1, description="Second-level nodes sampled per first-level node")
    n_child_bases: int = Field(default=2, ge=1, description="Child bases owned by every first-level node")
    sh_degree: int = Field(default=1, ge=0, le=2, description="Spherical-harmonics degree of Gaussian color")
    init_opacity: float = Field(default=0.8, gt=0.0, le=1.0, description="Initial Gaussian opacity")
    scale_neighbors: int = Field(default=3, ge=1, description="Neighbours averaged for the initial Gaussian scale")
    min_scale: float = Field(default=1e-3, gt=0.0, description="Lower clamp of the initial Gaussian scale")
    max_kmeans_iters: int = Field(default=100, ge=1, description="Lloyd iteration cap")

    @model_validator(mode="after")
    def check_counts(self) -> "InitConfig":
        if self.n_clusters > self.n_trajectories:
            raise ValueError(f"n_clusters ({self.n_clusters}) must not exceed n_trajectories ({self.n_trajectories})")
        if self.n_nodes > self.n_trajectories:
            raise ValueError(f"n_nodes ({self.n_nodes}) must not exceed n_trajectories ({self.n_trajectories})")
        return self
