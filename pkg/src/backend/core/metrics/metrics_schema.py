"""
Evaluation settings and report models.
"""

import csv
import io
import json
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field

PSNR_CAP = 99.0


class EvalSettings(BaseModel):
    """Masked-bbox evaluation protocol"""
    margin_frac: float = Field(default=0.2, ge=0.0, description="Bbox margin per side as a fraction of max(bbox width, height)")
    frame_stride: int = Field(default=4, ge=1, description="Evaluate every n-th frame of each held-out view")
    include_training_views: bool = Field(default=False, description="Also score the training cameras")


class ViewMetrics(BaseModel):
    """Scores of one rendered view at one frame"""
    view: str = Field(description="View name, e.g. 'heldout_120' or 'train'")
    frame: int = Field(ge=0, description="Frame index")
    psnr: float = Field(le=PSNR_CAP, description="PSNR inside the bbox (dB)")
    ssim: float = Field(ge=-1.0, le=1.0, description="SSIM inside the bbox")
    bbox: Tuple[int, int, int, int] = Field(description="(row0, col0, row1, col1), end-exclusive")


class TrackErrorStats(BaseModel):
    """Per-point per-frame Euclidean error summary (scene units)"""
    mean: float = Field(ge=0.0, description="Mean over all defined point-frames")
    median: float = Field(ge=0.0, description="Median over all defined point-frames")
    endpoint: float = Field(ge=0.0, description="Median over points of the final-frame error")
    endpoint_mean: float = Field(ge=0.0, description="Mean over points of the final-frame error")
    occluded_mean: Optional[float] = Field(default=None, description="Mean over occluded point-frames")
    occluded_median: Optional[float] = Field(default=None, description="Median over occluded point-frames")
    num_points: int = Field(ge=0, description="Compared trajectories")
    num_occluded: int = Field(default=0, ge=0, description="Occluded point-frames")
    undefined_frames: int = Field(default=0, ge=0, description="Point-frames skipped for lacking a position")


class EvalReport(BaseModel):
    """Image and trajectory metrics of one run"""
    ablation: str = Field(description="Tracking ablation that produced the run")
    seed: int = Field(description="Run seed")
    views: List[ViewMetrics] = Field(default_factory=list, description="Per-view, per-frame scores")
    mean_psnr: Optional[float] = Field(default=None, description="Mean PSNR over views")
    mean_ssim: Optional[float] = Field(default=None, description="Mean SSIM over views")
    trajectory: Optional[TrackErrorStats] = Field(default=None, description="Fused trajectories vs ground truth")

    @classmethod
    def from_views(cls, ablation: str, seed: int, views: List[ViewMetrics],
                   trajectory: Optional[TrackErrorStats] = None) -> "EvalReport":
        mean_psnr = sum(v.psnr for v in views) / len(views) if views else None
        mean_ssim = sum(v.ssim for v in views) / len(views) if views else None
        return cls(ablation=ablation, seed=seed, views=views, mean_psnr=mean_psnr,
                   mean_ssim=mean_ssim, trajectory=trajectory)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per view plus a summary row; trajectory stats repeated as columns."""
        traj = self.trajectory.model_dump() if self.trajectory else {}
        traj_cols = sorted(TrackErrorStats.model_fields)
        header = ["ablation", "seed", "view", "frame", "psnr", "ssim", "bbox"] + [f"traj_{c}" for c in traj_cols]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        tail = [traj.get(c, "") for c in traj_cols]
        for v in self.views:
            writer.writerow([self.ablation, self.seed, v.view, v.frame, repr(v.psnr), repr(v.ssim),
                             " ".join(str(b) for b in v.bbox)] + tail)
        writer.writerow([self.ablation, self.seed, "mean", "",
                         "" if self.mean_psnr is None else repr(self.mean_psnr),
                         "" if self.mean_ssim is None else repr(self.mean_ssim), ""] + tail)
        return buffer.getvalue()
