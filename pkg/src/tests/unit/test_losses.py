"""
Unit tests for the reconstruction losses and the ARAP regularizer.
"""

import numpy as np
import pytest
import torch

from src.backend.core.geometry.quaternion_ops import se3_apply
from src.backend.core.optim import (
    LossConfig,
    NonFiniteLossError,
    ShapeMismatchError,
    arap_loss,
    check_finite,
    render_losses,
    ssim_map,
    total_loss,
)
from src.backend.core.render import RenderedImage
from src.tests.fixtures.rigid import random_rigid

DTYPE = torch.float64


def rigid_nodes(transform, points):
    n = points.shape[0]
    quats = torch.as_tensor(np.tile(transform.rotation, (n, 1)), dtype=DTYPE)
    trans = torch.as_tensor(np.tile(transform.translation, (n, 1)), dtype=DTYPE)
    return se3_apply(quats, trans, torch.as_tensor(points, dtype=DTYPE)), quats, trans


def identity_nodes(n):
    quats = torch.zeros((n, 4), dtype=DTYPE)
    quats[:, 0] = 1.0
    return quats, torch.zeros((n, 3), dtype=DTYPE)


class TestArapLoss:
    """Test the rigidity regularizer."""

    def test_rigid_motion_costs_nothing(self, rng):
        """Test two rigid poses of the same node set give ARAP below 1e-9."""
        points = rng.normal(size=(12, 3))
        pairs = torch.as_tensor([(i, j) for i in range(12) for j in range(12) if i != j])
        for _ in range(20):
            pos_t, q_t, tr_t = rigid_nodes(random_rigid(rng), points)
            pos_u, q_u, tr_u = rigid_nodes(random_rigid(rng), points)
            assert float(arap_loss(pos_t, pos_u, q_t, tr_t, q_u, tr_u, pairs)) < 1e-9

    def test_stretch_costs_w1_delta(self):
        """Test stretching one pair by delta costs w1 * delta."""
        pos_t = torch.tensor([[0.0, 0, 0], [1.0, 0, 0]], dtype=DTYPE)
        pos_u = torch.tensor([[0.0, 0, 0], [1.1, 0, 0]], dtype=DTYPE)
        quats, trans = identity_nodes(2)
        pairs = torch.tensor([[0, 1]])
        loss = arap_loss(pos_t, pos_u, quats, trans, quats, trans, pairs, w1=2.0, w2=0.0)
        assert float(loss) == pytest.approx(0.2)

    def test_local_drift_term(self):
        """Test the local-coordinate term measures displacement in the partner's frame."""
        pos_t = torch.tensor([[0.0, 0, 0], [0.0, 1.0, 0]], dtype=DTYPE)
        pos_u = torch.tensor([[0.0, 0, 0], [0.0, 1.0, 0]], dtype=DTYPE)
        quats, trans = identity_nodes(2)
        moved = trans.clone()
        moved[1] = torch.tensor([0.3, 0.0, 0.0], dtype=DTYPE)
        loss = arap_loss(pos_t, pos_u, quats, trans, quats, moved, torch.tensor([[0, 1]]), w1=0.0, w2=1.0)
        assert float(loss) == pytest.approx(0.3)

    def test_mean_reduction(self):
        """Test reduction='mean' averages over pairs."""
        pos_t = torch.tensor([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1.0, 0]], dtype=DTYPE)
        pos_u = torch.tensor([[0.0, 0, 0], [1.2, 0, 0], [0.0, 1.0, 0]], dtype=DTYPE)
        quats, trans = identity_nodes(3)
        pairs = torch.tensor([[0, 1], [0, 2]])
        total = arap_loss(pos_t, pos_u, quats, trans, quats, trans, pairs, w2=0.0)
        mean = arap_loss(pos_t, pos_u, quats, trans, quats, trans, pairs, w2=0.0, reduction="mean")
        assert float(total) == pytest.approx(0.2)
        assert float(mean) == pytest.approx(0.1)

    def test_no_pairs_is_zero(self):
        """Test an empty pair list."""
        quats, trans = identity_nodes(2)
        pos = torch.zeros((2, 3), dtype=DTYPE)
        assert float(arap_loss(pos, pos, quats, trans, quats, trans, torch.zeros((0, 2), dtype=torch.long))) == 0.0

    def test_coincident_nodes_have_finite_gradient(self):
        """Test the deadzone keeps gradients finite at zero distance."""
        pos_t = torch.zeros((2, 3), dtype=DTYPE, requires_grad=True)
        quats, trans = identity_nodes(2)
        arap_loss(pos_t, pos_t.detach(), quats, trans, quats, trans, torch.tensor([[0, 1]])).backward()
        assert torch.isfinite(pos_t.grad).all()


class TestImageLosses:
    """Test SSIM and the per-term render losses."""

    def test_ssim_identical_images(self, rng):
        """Test SSIM of an image with itself is one everywhere."""
        image = torch.as_tensor(rng.uniform(size=(16, 16, 3)), dtype=DTYPE)
        assert torch.allclose(ssim_map(image, image), torch.ones((16, 16), dtype=DTYPE))

    def test_ssim_drops_with_noise(self, rng):
        """Test noise lowers SSIM."""
        image = torch.as_tensor(rng.uniform(size=(16, 16, 3)), dtype=DTYPE)
        noisy = (image + torch.as_tensor(rng.normal(scale=0.2, size=image.shape))).clamp(0, 1)
        assert float(ssim_map(image, noisy).mean()) < 0.9

    def test_perfect_render_has_zero_loss(self, rng):
        """Test every term vanishes when the render equals the observations."""
        color = torch.as_tensor(rng.uniform(size=(8, 8, 3)), dtype=DTYPE)
        mask = np.zeros((8, 8))
        mask[2:6, 2:6] = 1.0
        depth = np.where(mask > 0, 2.0, 0.0)
        rendered = RenderedImage(color, torch.as_tensor(mask), torch.as_tensor(depth))
        terms = render_losses(rendered, color.numpy(), mask, depth, mask > 0)
        for name in ("rgb", "mask", "depth", "track2d"):
            assert float(terms[name]) == pytest.approx(0.0, abs=1e-9)

    def test_track_term_is_mean_pixel_distance(self):
        """Test the 2D track term."""
        rendered = RenderedImage(torch.zeros((4, 4, 3), dtype=DTYPE), torch.zeros((4, 4), dtype=DTYPE),
                                 torch.zeros((4, 4), dtype=DTYPE))
        pred = torch.tensor([[0.0, 0.0], [1.0, 1.0]], dtype=DTYPE)
        obs = torch.tensor([[3.0, 4.0], [1.0, 1.0]], dtype=DTYPE)
        terms = render_losses(rendered, np.zeros((4, 4, 3)), np.zeros((4, 4)), np.zeros((4, 4)),
                              np.zeros((4, 4), dtype=bool), pred, obs)
        assert float(terms["track2d"]) == pytest.approx(2.5)

    def test_shape_mismatch_fails(self):
        """Test ShapeMismatchError on a ground truth of the wrong size."""
        rendered = RenderedImage(torch.zeros((4, 5, 3), dtype=DTYPE), torch.zeros((4, 5), dtype=DTYPE),
                                 torch.zeros((4, 5), dtype=DTYPE))
        with pytest.raises(ShapeMismatchError):
            render_losses(rendered, np.zeros((4, 4, 3)), np.zeros((4, 5)), np.zeros((4, 5)),
                          np.zeros((4, 5), dtype=bool))

    def test_total_loss_weights_terms(self):
        """Test the weighted sum."""
        config = LossConfig(lambda_rgb=2.0, lambda_mask=0.0, lambda_depth=1.0, lambda_2dtrack=0.5, lambda_arap=3.0)
        terms = {name: torch.tensor(1.0, dtype=DTYPE) for name in ("rgb", "mask", "depth", "track2d", "arap")}
        assert float(total_loss(terms, config)) == pytest.approx(6.5)

    def test_non_finite_term_is_named(self):
        """Test NonFiniteLossError names the offending term."""
        terms = {"rgb": torch.tensor(0.1), "depth": torch.tensor(float("nan"))}
        with pytest.raises(NonFiniteLossError, match="depth") as info:
            check_finite(terms)
        assert info.value.term == "depth"

    def test_invalid_weights_rejected(self):
        """Test negative weights fail validation."""
        with pytest.raises(ValueError):
            LossConfig(lambda_rgb=-1.0)
