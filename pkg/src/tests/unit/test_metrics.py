"""
Unit tests for image metrics, the masked bounding-box protocol and trajectory errors.
"""

import csv
import io
import json

import numpy as np
import pytest

from src.backend.core.metrics import (
    PSNR_CAP,
    EmptyMaskError,
    EvalReport,
    IdMismatchError,
    ShapeMismatchError,
    ViewMetrics,
    mask_bbox,
    masked_bbox_eval,
    psnr,
    psnr_ssim,
    ssim,
    track_error,
)
from src.backend.core.tracking import Trajectory3D


def straight_tracks(count=4, frames=5, offset=0.0, visible=None):
    tracks = []
    for i in range(count):
        positions = np.outer(np.arange(frames), [1.0, 0.0, 0.0]) + [0.0, float(i), 0.0] + offset
        tracks.append(Trajectory3D(i, positions, np.ones(frames) if visible is None else visible))
    return tracks


class TestImageMetrics:
    """Test PSNR and SSIM."""

    def test_identical_images(self, rng):
        """Test identical images give the PSNR cap and SSIM 1."""
        image = rng.uniform(size=(20, 20, 3))
        p, s = psnr_ssim(image, image)
        assert p == PSNR_CAP
        assert s == pytest.approx(1.0)

    def test_known_psnr(self):
        """Test a uniform 0.1 error is 20 dB."""
        a = np.zeros((16, 16, 3))
        assert psnr(a, a + 0.1) == pytest.approx(20.0)

    def test_symmetric(self, rng):
        """Test both metrics are symmetric in their arguments."""
        a, b = rng.uniform(size=(2, 24, 24, 3))
        assert psnr(a, b) == pytest.approx(psnr(b, a))
        assert ssim(a, b) == pytest.approx(ssim(b, a))

    def test_worse_image_scores_lower(self, rng):
        """Test more noise lowers both metrics."""
        image = rng.uniform(0.2, 0.8, size=(24, 24, 3))
        slightly = np.clip(image + rng.normal(scale=0.02, size=image.shape), 0, 1)
        heavily = np.clip(image + rng.normal(scale=0.2, size=image.shape), 0, 1)
        assert psnr(image, slightly) > psnr(image, heavily)
        assert ssim(image, slightly) > ssim(image, heavily)

    def test_small_images_are_padded(self, rng):
        """Test SSIM on images smaller than the window."""
        image = rng.uniform(size=(5, 7, 3))
        assert ssim(image, image) == pytest.approx(1.0)

    def test_shape_mismatch_fails(self):
        """Test ShapeMismatchError."""
        with pytest.raises(ShapeMismatchError):
            psnr_ssim(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestMaskedBbox:
    """Test the bbox crop protocol."""

    def test_margin_expands_tight_box(self):
        """Test a 10x10 mask with 20% margin grows by 2 pixels per side."""
        mask = np.zeros((40, 40), dtype=bool)
        mask[10:20, 10:20] = True
        assert mask_bbox(mask, 0.2) == (8, 8, 22, 22)

    def test_box_clipped_to_image(self):
        """Test a corner mask is clipped at the border."""
        mask = np.zeros((30, 30), dtype=bool)
        mask[:5, :10] = True
        assert mask_bbox(mask, 0.2) == (0, 0, 7, 12)

    def test_full_mask_covers_image(self):
        """Test a full mask keeps the whole image."""
        assert mask_bbox(np.ones((12, 16), dtype=bool), 0.2) == (0, 0, 12, 16)

    def test_eval_equals_metrics_on_crop(self, rng):
        """Test masked_bbox_eval scores exactly the crop."""
        gt = rng.uniform(size=(32, 32, 3))
        rendered = np.clip(gt + rng.normal(scale=0.05, size=gt.shape), 0, 1)
        mask = np.zeros((32, 32), dtype=bool)
        mask[12:20, 8:24] = True
        result = masked_bbox_eval(rendered, gt, mask, view="heldout_120", frame=3)
        r0, c0, r1, c1 = result.bbox
        p, s = psnr_ssim(rendered[r0:r1, c0:c1], gt[r0:r1, c0:c1])
        assert (result.psnr, result.ssim) == (p, s)
        assert result.view == "heldout_120" and result.frame == 3

    def test_errors_outside_box_are_ignored(self, rng):
        """Test pixels far from the object do not change the score."""
        gt = rng.uniform(size=(40, 40, 3))
        rendered = gt.copy()
        rendered[:4, :4] = 1.0 - rendered[:4, :4]
        mask = np.zeros((40, 40), dtype=bool)
        mask[20:30, 20:30] = True
        assert masked_bbox_eval(rendered, gt, mask).psnr == PSNR_CAP

    def test_empty_mask_fails(self):
        """Test EmptyMaskError."""
        image = np.zeros((8, 8, 3))
        with pytest.raises(EmptyMaskError):
            masked_bbox_eval(image, image, np.zeros((8, 8), dtype=bool))

    def test_mask_shape_mismatch_fails(self):
        """Test a mask of the wrong size."""
        image = np.zeros((8, 8, 3))
        with pytest.raises(ShapeMismatchError):
            masked_bbox_eval(image, image, np.ones((8, 9), dtype=bool))


class TestTrackError:
    """Test trajectory error statistics."""

    def test_identical_tracks(self):
        """Test zero error against itself."""
        gt = straight_tracks()
        stats = track_error(gt, gt)
        assert stats.mean == stats.median == stats.endpoint == 0.0
        assert stats.num_points == 4

    def test_constant_offset(self):
        """Test a constant 0.1 offset gives 0.1 for every statistic."""
        stats = track_error(straight_tracks(offset=np.array([0.0, 0.0, 0.1])), straight_tracks())
        assert stats.mean == pytest.approx(0.1)
        assert stats.median == pytest.approx(0.1)
        assert stats.endpoint == pytest.approx(0.1)
        assert stats.endpoint_mean == pytest.approx(0.1)

    def test_order_does_not_matter(self):
        """Test trajectories are matched by id."""
        pred = straight_tracks(offset=np.array([0.2, 0.0, 0.0]))
        assert track_error(pred[::-1], straight_tracks()).mean == pytest.approx(0.2)

    def test_occluded_statistics(self):
        """Test occluded frames are summarised separately."""
        visible = np.array([1, 1, 0, 0, 1])
        gt = straight_tracks(visible=visible)
        pred = straight_tracks(offset=np.array([0.0, 0.3, 0.0]), visible=visible)
        stats = track_error(pred, gt)
        assert stats.num_occluded == 4 * 2
        assert stats.occluded_mean == pytest.approx(0.3)

    def test_explicit_occlusion_mask(self):
        """Test a supplied occlusion mask overrides the visibility flags."""
        gt = straight_tracks()
        occluded = np.zeros((4, 5), dtype=bool)
        occluded[0, -1] = True
        stats = track_error(gt, gt, occluded=occluded)
        assert stats.num_occluded == 1

    def test_partial_frames_are_skipped(self):
        """Test undefined positions are counted, not scored."""
        gt = straight_tracks(count=1)
        positions = gt[0].positions.copy()
        positions[2] = np.nan
        pred = [Trajectory3D(0, positions, [1, 1, 0, 1, 1], partial=True)]
        stats = track_error(pred, gt)
        assert stats.undefined_frames == 1
        assert stats.mean == 0.0

    def test_error_grows_with_noise(self, rng):
        """Test larger perturbations give larger errors."""
        gt = straight_tracks(count=10, frames=8)
        means = []
        for scale in (0.01, 0.1, 1.0):
            pred = [Trajectory3D(tr.point_id, tr.positions + rng.normal(scale=scale, size=tr.positions.shape),
                                 tr.visibility) for tr in gt]
            means.append(track_error(pred, gt).mean)
        assert means[0] < means[1] < means[2]

    def test_id_mismatch_fails(self):
        """Test IdMismatchError on missing ids and differing lengths."""
        gt = straight_tracks()
        with pytest.raises(IdMismatchError):
            track_error(gt[:3], gt)
        with pytest.raises(IdMismatchError):
            track_error(straight_tracks(frames=6), gt)


class TestEvalReport:
    """Test report aggregation and serialization."""

    @pytest.fixture
    def report(self):
        views = [ViewMetrics(view="heldout_120", frame=f, psnr=20.0 + f, ssim=0.8, bbox=(0, 0, 8, 8))
                 for f in (0, 2)]
        stats = track_error(straight_tracks(), straight_tracks())
        return EvalReport.from_views("full", 3, views, stats)

    def test_means(self, report):
        """Test mean PSNR and SSIM over views."""
        assert report.mean_psnr == pytest.approx(21.0)
        assert report.mean_ssim == pytest.approx(0.8)

    def test_csv_rows(self, report):
        """Test one CSV row per view plus the summary row."""
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        assert [r["view"] for r in rows] == ["heldout_120", "heldout_120", "mean"]
        assert float(rows[-1]["psnr"]) == pytest.approx(21.0)
        assert rows[0]["bbox"] == "0 0 8 8"
        assert rows[0]["traj_mean"] == "0.0"

    def test_json_round_trip(self, report):
        """Test the JSON report reloads into the same model."""
        data = json.loads(report.to_json())
        assert data["ablation"] == "full"
        assert EvalReport.model_validate(data) == report

    def test_empty_report(self):
        """Test a report without views has no means."""
        report = EvalReport.from_views("no_anchor", 0, [])
        assert report.mean_psnr is None
        assert report.to_csv().strip().splitlines()[-1].startswith("no_anchor,0,mean")
