"""
Unit tests for on-disk formats: images, depth files, records, tables and scene bundles.
"""

import numpy as np
import pytest

from src.backend.boundary.storage import (
    BundleFormatError,
    DepthFormatError,
    ImageFormatError,
    RecordFormatError,
    SceneBundle,
    held_out_name,
    read_bindings,
    read_depth,
    read_gaussians,
    read_image,
    read_loss_csv,
    read_mask,
    read_moments,
    read_motion_tree,
    read_scene_bundle,
    read_table,
    read_trajectories,
    to_uint8,
    write_bindings,
    write_depth,
    write_gaussians,
    write_image,
    write_loss_csv,
    write_mask,
    write_moments,
    write_motion_tree,
    write_scene_bundle,
    write_table,
    write_trajectories,
)
from src.backend.core.geometry import DepthMap
from src.backend.core.initialization import InitConfig, initialize
from src.backend.core.tracking import Trajectory3D


class TestImages:
    """Test image and mask files."""

    def test_uint8_rounding(self):
        """Test clipping and round-half-up quantization."""
        assert to_uint8(np.array([-0.5, 0.0, 0.5, 1.0, 2.0])).tolist() == [0, 0, 128, 255, 255]

    @pytest.mark.parametrize("suffix", ["ppm", "png"])
    def test_image_round_trip(self, tmp_path, rng, suffix):
        """Test frames survive within half a quantization step."""
        image = rng.uniform(size=(6, 9, 3))
        restored = read_image(write_image(tmp_path / f"frame.{suffix}", image))
        assert restored.shape == (6, 9, 3)
        assert np.abs(restored - image).max() <= 0.5 / 255.0 + 1e-12

    def test_mask_round_trip(self, tmp_path, rng):
        """Test masks are exact."""
        mask = rng.uniform(size=(7, 5)) > 0.5
        assert np.array_equal(read_mask(write_mask(tmp_path / "mask.pgm", mask)), mask)

    def test_unreadable_image_fails(self, tmp_path):
        """Test ImageFormatError on garbage."""
        path = tmp_path / "broken.ppm"
        path.write_bytes(b"not an image")
        with pytest.raises(ImageFormatError):
            read_image(path)


class TestDepthFiles:
    """Test DPTH depth files."""

    def test_round_trip_is_exact(self, tmp_path, rng):
        """Test values and validity are bit-exact."""
        values = rng.uniform(0.5, 3.0, size=(4, 6))
        valid = rng.uniform(size=(4, 6)) > 0.3
        depth = DepthMap(np.where(valid, values, 0.0), valid)
        restored = read_depth(write_depth(tmp_path / "d.dpth", depth))
        assert np.array_equal(restored.values, depth.values)
        assert np.array_equal(restored.valid, depth.valid)

    def test_bad_magic_fails(self, tmp_path):
        """Test DepthFormatError on a foreign file."""
        path = tmp_path / "d.dpth"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(DepthFormatError, match="magic"):
            read_depth(path)

    def test_truncated_file_fails(self, tmp_path):
        """Test DepthFormatError on a short payload."""
        path = write_depth(tmp_path / "d.dpth", DepthMap.from_array(np.ones((3, 3))))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DepthFormatError):
            read_depth(path)


class TestRecords:
    """Test structured records and binary tables."""

    def test_table_round_trip(self, tmp_path, rng):
        """Test arrays, dtypes and metadata come back unchanged."""
        arrays = {"a": rng.normal(size=(3, 4)), "ids": np.arange(5), "flags": np.array([True, False])}
        write_table(tmp_path / "t.bin", arrays, {"note": "x"})
        restored, meta = read_table(tmp_path / "t.bin")
        assert np.array_equal(restored["a"], arrays["a"])
        assert restored["ids"].tolist() == [0, 1, 2, 3, 4]
        assert restored["flags"].tolist() == [1, 0]
        assert meta == {"note": "x"}

    def test_table_size_mismatch_fails(self, tmp_path):
        """Test RecordFormatError when the binary disagrees with its sidecar."""
        path, _ = write_table(tmp_path / "t.bin", {"a": np.zeros(4)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(RecordFormatError):
            read_table(path)

    def test_trajectories_keep_missing_positions(self, tmp_path):
        """Test NaN positions round-trip through null."""
        positions = np.array([[0.0, 1.0, 2.0], [np.nan] * 3])
        track = Trajectory3D(7, positions, [1, 0], confidence=[0.9, 0.1], pixels=[[1.0, 2.0], [3.0, 4.0]],
                             partial=True)
        (restored,) = read_trajectories(write_trajectories(tmp_path / "t.jsonl", [track]))
        assert restored.point_id == 7 and restored.partial
        assert np.array_equal(restored.positions, positions, equal_nan=True)
        assert restored.visibility.tolist() == [True, False]
        assert np.allclose(restored.confidence, [0.9, 0.1])

    def test_invalid_trajectory_line_fails(self, tmp_path):
        """Test RecordFormatError names the broken line."""
        path = tmp_path / "t.jsonl"
        path.write_text('{"id": 0}\n')
        with pytest.raises(RecordFormatError, match=":1:"):
            read_trajectories(path)

    def test_loss_csv_round_trip(self, tmp_path):
        """Test loss history columns and values."""
        history = [{"iteration": 0, "frame": 3, "rgb": 0.5, "mask": 0.25, "depth": 0.1, "track2d": 0.0,
                    "arap": 1e-3, "total": 0.9}]
        assert read_loss_csv(write_loss_csv(tmp_path / "loss.csv", history)) == history

    def test_loss_csv_bad_header_fails(self, tmp_path):
        """Test RecordFormatError on foreign columns."""
        path = tmp_path / "loss.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(RecordFormatError):
            read_loss_csv(path)

    def test_moments_round_trip(self, tmp_path, rng):
        """Test Adam moments keep their group structure."""
        moments = {"means": {"exp_avg": rng.normal(size=(3, 3)), "exp_avg_sq": rng.uniform(size=(3, 3))}}
        write_moments(tmp_path / "m.bin", moments)
        restored = read_moments(tmp_path / "m.bin")
        assert set(restored) == {"means"}
        assert np.array_equal(restored["means"]["exp_avg"], moments["means"]["exp_avg"])

    def test_initialization_artifacts_round_trip(self, tmp_path, tiny_scene):
        """Test Gaussians, bindings and the motion tree reload exactly."""
        result = initialize(tiny_scene.gt_tracks, tiny_scene.frames,
                            InitConfig(n_trajectories=24, n_clusters=2, n_nodes=6, k_neighbors=3, seed=0))
        write_gaussians(tmp_path / "gaussians.bin", result.scene)
        write_bindings(tmp_path / "bindings.bin", result.bindings)
        write_motion_tree(tmp_path / "tree.json", result.tree)

        scene = read_gaussians(tmp_path / "gaussians.bin")
        assert np.array_equal(scene.means, result.scene.means)
        assert np.array_equal(scene.sh, result.scene.sh)
        assert np.array_equal(scene.source_ids, result.scene.source_ids)
        assert scene.canonical_frame == result.scene.canonical_frame

        bindings = read_bindings(tmp_path / "bindings.bin")
        assert np.array_equal(bindings.indices, result.bindings.indices)
        assert bindings.radius == result.bindings.radius

        tree = read_motion_tree(tmp_path / "tree.json")
        for t in range(tree.num_frames):
            q_a, tr_a = tree.level1_motions(t)
            q_b, tr_b = result.tree.level1_motions(t)
            assert np.allclose(q_a.numpy(), q_b.numpy(), atol=1e-12)
            assert np.allclose(tr_a.numpy(), tr_b.numpy(), atol=1e-12)

    def test_corrupt_motion_tree_fails(self, tmp_path):
        """Test RecordFormatError for a tree missing fields."""
        path = tmp_path / "tree.json"
        path.write_text('{"basis_quats": []}')
        with pytest.raises(RecordFormatError):
            read_motion_tree(path)


class TestSceneBundle:
    """Test the scene bundle directory."""

    def test_round_trip(self, tmp_path, tiny_scene):
        """Test frames, depths, masks, cameras, tracks and held-out views reload."""
        bundle = SceneBundle.from_scene(tiny_scene)
        write_scene_bundle(bundle, tmp_path / "scene")
        restored = read_scene_bundle(tmp_path / "scene")
        assert restored.num_frames == bundle.num_frames
        assert restored.spec == bundle.spec
        for a, b in zip(restored.depths, bundle.depths):
            assert np.array_equal(a.values, b.values)
        for a, b in zip(restored.masks, bundle.masks):
            assert np.array_equal(a, b)
        for a, b in zip(restored.frames, bundle.frames):
            assert np.abs(a - b).max() <= 0.5 / 255.0 + 1e-12
        assert np.allclose(restored.cams[3].pose.as_matrix(), bundle.cams[3].pose.as_matrix())
        assert [tr.point_id for tr in restored.gt_tracks] == [tr.point_id for tr in bundle.gt_tracks]
        assert [v.offset_deg for v in restored.held_out] == [120.0]
        assert (tmp_path / "scene" / "heldout" / held_out_name(120.0) / "camera.json").exists()

    def test_missing_bundle_fails(self, tmp_path):
        """Test BundleFormatError for an empty directory."""
        with pytest.raises(BundleFormatError):
            read_scene_bundle(tmp_path)

    def test_missing_frame_fails(self, tmp_path, tiny_scene):
        """Test BundleFormatError names the missing file."""
        write_scene_bundle(SceneBundle.from_scene(tiny_scene), tmp_path / "scene")
        (tmp_path / "scene" / "masks" / "0002.pgm").unlink()
        with pytest.raises(BundleFormatError, match="0002"):
            read_scene_bundle(tmp_path / "scene")
