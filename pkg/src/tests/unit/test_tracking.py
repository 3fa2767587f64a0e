"""
Unit tests for lifting, anchor windows, fusion and the anchor-guided tracker.
"""

import numpy as np
import pytest

from src.backend.core.geometry import DepthMap, SE3Transform
from src.backend.core.metrics import track_error
from src.backend.core.synth import (
    SyntheticTrackerSpec,
    generate_scene,
    make_queries,
    preset_spec,
    synthetic_tracker_2d,
    synthetic_tracker_3d,
)
from src.backend.core.tracking import (
    AnchorSet,
    AnchorTracker,
    BackendFailureError,
    PointTracker3D,
    Track2DResult,
    TrackerConfig,
    TrackingMode,
    Trajectory3D,
    build_anchor_sets,
    fuse_window,
    hold_last_visible,
    lift_track,
    stitch_windows,
    track_all,
    visibility_test,
    window_ranges,
)
from src.tests.fixtures.rigid import random_rigid

NOISE_FREE = SyntheticTrackerSpec(noise_sigma_2d=0.0, noise_sigma_3d=0.0, drift_rate=0.0)


def occluded_frames(gt_tracks):
    return ~np.stack([tr.visibility for tr in gt_tracks])


class FailingTracker3D(PointTracker3D):
    def track_window(self, queries, start, end, frames, depths, cams):
        raise RuntimeError("device lost")


class TestLifting:
    """Test confidence-masked lifting."""

    def test_lift_recovers_plane_points(self, test_camera):
        """Test that confident pixels lift onto a fronto-parallel plane."""
        depth = DepthMap.from_array(np.full((32, 32), 3.0))
        r = Track2DResult(np.array([[10.0, 12.5], [20.25, 4.0]]), np.array([0.9, 0.8]))
        lifted = lift_track(r, [depth, depth], [test_camera, test_camera], tau=0.5)
        assert lifted.mask.tolist() == [True, True]
        expected = test_camera.unproject_pixels(np.array([10.0, 12.5]), 3.0)
        assert np.allclose(lifted.points[0], expected)

    def test_low_confidence_is_masked(self, test_camera):
        """Test that c_t <= tau leaves the frame unlifted."""
        depth = DepthMap.from_array(np.full((32, 32), 3.0))
        r = Track2DResult(np.array([[10.0, 10.0], [10.0, 10.0]]), np.array([0.5, 0.51]))
        lifted = lift_track(r, [depth, depth], [test_camera, test_camera], tau=0.5)
        assert lifted.mask.tolist() == [False, True]
        assert np.isnan(lifted.points[0]).all()

    def test_missing_depth_demotes_frame(self, test_camera):
        """Test confident frames without valid depth are dropped and counted."""
        values = np.full((32, 32), 3.0)
        values[10, 10] = 0.0
        depth = DepthMap.from_array(values)
        r = Track2DResult(np.array([[10.0, 10.0]]), np.array([0.9]))
        lifted = lift_track(r, [depth], [test_camera], tau=0.5)
        assert not lifted.mask[0]
        assert lifted.demoted == 1

    def test_out_of_image_is_demoted(self, test_camera):
        """Test pixels outside the image cannot be lifted."""
        depth = DepthMap.from_array(np.full((32, 32), 3.0))
        r = Track2DResult(np.array([[40.0, 10.0]]), np.array([0.9]))
        assert not lift_track(r, [depth], [test_camera], tau=0.5).mask[0]


class TestWindows:
    """Test window layout and anchor collection."""

    def test_window_ranges_cover_sequence(self):
        """Test windows start every stride and end at the last frame."""
        cfg = TrackerConfig(window_len=16, window_stride=8)
        assert window_ranges(40, cfg) == [(0, 15), (8, 23), (16, 31), (24, 39)]

    def test_short_sequence_single_window(self):
        """Test a sequence shorter than one window."""
        assert window_ranges(5, TrackerConfig(window_len=16, window_stride=8)) == [(0, 4)]

    def test_stride_larger_than_window_rejected(self):
        """Test config validation."""
        with pytest.raises(ValueError):
            TrackerConfig(window_len=4, window_stride=5)

    def test_anchor_sets_follow_mask(self):
        """Test anchors are exactly the masked point-frames of each window."""
        mask = np.zeros((3, 6), dtype=bool)
        mask[0, [0, 4]] = True
        mask[2, 3] = True
        points = np.arange(3 * 6 * 3, dtype=float).reshape(3, 6, 3)
        sets = build_anchor_sets(points, mask, TrackerConfig(window_len=4, window_stride=2), 6)
        assert [s.window for s in sets] == [(0, 3), (2, 5)]
        assert sets[0].frames.tolist() == [0, 3]
        assert sets[0].point_rows.tolist() == [0, 2]
        assert np.allclose(sets[1].positions[-1], points[0, 4])


class TestFusion:
    """Test per-window rigid correction and stitching."""

    def test_fuse_removes_rigid_offset(self, rng):
        """Test a rigidly displaced window snaps onto its anchors."""
        truth = rng.normal(size=(10, 3, 3))
        offset = SE3Transform.from_axis_angle([0, 1, 0], 0.2, (0.3, 0.0, -0.1))
        raw = offset.apply(truth)
        frames = np.repeat(np.arange(3), 4)
        rows = np.tile(np.arange(4), 3)
        anchors = AnchorSet((0, 2), frames, rows, truth[rows, frames])
        corrected, corrections, fitted = fuse_window(raw, anchors)
        assert fitted == 3
        assert np.allclose(corrected, truth, atol=1e-9)
        assert corrections[1].is_close(offset.inverse(), atol=1e-9)

    def test_frames_without_anchors_use_nearest_fit(self, rng):
        """Test unanchored frames borrow the nearest fitted correction."""
        truth = rng.normal(size=(6, 4, 3))
        raw = truth + np.array([0.5, 0.0, 0.0])
        rows = np.arange(4)
        anchors = AnchorSet((0, 3), np.full(4, 1), rows, truth[rows, 1])
        corrected, _, fitted = fuse_window(raw, anchors)
        assert fitted == 1
        assert np.allclose(corrected, truth, atol=1e-9)

    def test_no_anchors_leaves_window_unchanged(self, rng):
        """Test identity correction when nothing is anchored."""
        raw = rng.normal(size=(5, 3, 3))
        anchors = AnchorSet((0, 2), np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros((0, 3)))
        corrected, _, fitted = fuse_window(raw, anchors)
        assert fitted == 0
        assert np.allclose(corrected, raw)

    def test_fusion_is_rigidly_equivariant(self, rng):
        """Test moving raw tracks and anchors by one rigid transform moves the result by it."""
        truth = rng.normal(size=(8, 4, 3))
        raw = np.stack([random_rigid(rng, 0.2).apply(truth[:, f]) for f in range(4)], axis=1)
        raw += rng.normal(scale=0.01, size=raw.shape)
        frames = np.repeat([0, 1, 3], 5)
        rows = np.tile(np.arange(5), 3)
        anchors = AnchorSet((0, 3), frames, rows, truth[rows, frames])
        motion = random_rigid(rng)
        moved_anchors = AnchorSet((0, 3), frames, rows, motion.apply(anchors.positions))

        corrected, _, fitted = fuse_window(raw, anchors)
        moved, _, _ = fuse_window(motion.apply(raw), moved_anchors)
        assert fitted == 3
        assert np.allclose(moved, motion.apply(corrected), atol=1e-9)

    def test_stitch_cross_fades_overlap(self):
        """Test the linear cross-fade on overlapping frames."""
        first = np.zeros((1, 4, 3))
        second = np.ones((1, 4, 3))
        out = stitch_windows([(0, 3), (2, 5)], [first, second], 6)
        assert np.allclose(out[0, :, 0], [0.0, 0.0, 1 / 3, 2 / 3, 1.0, 1.0])

    def test_hold_last_visible(self):
        """Test gaps take the last defined position, leading gaps the first."""
        points = np.array([[np.nan] * 3, [1.0, 1, 1], [np.nan] * 3, [2.0, 2, 2], [np.nan] * 3])
        filled = hold_last_visible(points)
        assert np.allclose(filled[:, 0], [1.0, 1.0, 1.0, 2.0, 2.0])


class TestVisibility:
    """Test the depth-consistency visibility test."""

    def test_surface_point_visible_and_hidden_point_not(self, test_camera):
        """Test points at and behind the depth surface."""
        depth = DepthMap.from_array(np.full((32, 32), 3.0))
        assert visibility_test(np.zeros(3), depth, test_camera, 0.02) == 1
        assert visibility_test(np.array([0.0, 0.5, 0.0]), depth, test_camera, 0.02) == 0

    def test_behind_camera_not_visible(self, test_camera):
        """Test points behind the camera."""
        depth = DepthMap.from_array(np.full((32, 32), 3.0))
        assert visibility_test(np.array([0.0, -6.0, 0.0]), depth, test_camera, 0.02) == 0

    def test_ground_truth_visibility_matches_scene(self, tiny_scene):
        """Test visible ground-truth points project inside the object mask."""
        for track in tiny_scene.gt_tracks:
            for t in np.flatnonzero(track.visibility):
                u, v = np.rint(track.pixels[t]).astype(int)
                u = min(u, tiny_scene.spec.resolution[0] - 1)
                v = min(v, tiny_scene.spec.resolution[1] - 1)
                neighbourhood = tiny_scene.masks[t][max(v - 1, 0):v + 2, max(u - 1, 0):u + 2]
                assert neighbourhood.any()


class TestAnchorTracker:
    """Test the full tracking front-end on synthetic scenes."""

    def test_no_anchor_is_exact_with_perfect_backends(self, tiny_scene):
        """Test noise-free backends reproduce ground truth without fusion."""
        queries = make_queries(tiny_scene.gt_tracks)
        tracks, report = track_all(queries, tiny_scene.frames, tiny_scene.depths, tiny_scene.cams,
                                   synthetic_tracker_2d(NOISE_FREE, tiny_scene.gt_tracks),
                                   synthetic_tracker_3d(NOISE_FREE, tiny_scene.gt_tracks),
                                   TrackerConfig(window_len=4, window_stride=2), TrackingMode.NO_ANCHOR)
        gt = {tr.point_id: tr for tr in tiny_scene.gt_tracks}
        for track in tracks:
            assert np.abs(track.positions - gt[track.point_id].positions).max() < 1e-6
        assert report.mode == TrackingMode.NO_ANCHOR

    def test_full_mode_close_with_perfect_backends(self, tiny_scene):
        """Test fusion with noise-free backends stays at lifting accuracy."""
        queries = make_queries(tiny_scene.gt_tracks)
        tracks, report = track_all(queries, tiny_scene.frames, tiny_scene.depths, tiny_scene.cams,
                                   synthetic_tracker_2d(NOISE_FREE, tiny_scene.gt_tracks),
                                   synthetic_tracker_3d(NOISE_FREE, tiny_scene.gt_tracks),
                                   TrackerConfig(window_len=4, window_stride=2))
        gt = [tr for tr in tiny_scene.gt_tracks if tr.point_id in set(queries.ids.tolist())]
        stats = track_error(tracks, gt)
        assert stats.median < 5e-3
        assert stats.mean < 0.02
        assert len(report.windows) == len(report.anchors_per_window)
        assert all(not tr.partial for tr in tracks)

    def test_no_3d_init_is_partial(self, tiny_scene):
        """Test lift-only trajectories leave occluded frames empty."""
        queries = make_queries(tiny_scene.gt_tracks)
        tracks, _ = track_all(queries, tiny_scene.frames, tiny_scene.depths, tiny_scene.cams,
                              synthetic_tracker_2d(SyntheticTrackerSpec(), tiny_scene.gt_tracks), None,
                              mode=TrackingMode.NO_3D_INIT)
        assert all(tr.partial for tr in tracks)
        for tr in tracks:
            assert np.array_equal(tr.defined, tr.mask)

    def test_missing_3d_backend_fails(self, tiny_scene):
        """Test full mode without a 3D backend."""
        queries = make_queries(tiny_scene.gt_tracks)
        with pytest.raises(BackendFailureError) as exc:
            track_all(queries, tiny_scene.frames, tiny_scene.depths, tiny_scene.cams,
                      synthetic_tracker_2d(NOISE_FREE, tiny_scene.gt_tracks), None)
        assert exc.value.stage == "track3d"

    def test_backend_exception_is_wrapped(self, tiny_scene):
        """Test backend errors surface as BackendFailureError."""
        queries = make_queries(tiny_scene.gt_tracks)
        tracker = AnchorTracker(synthetic_tracker_2d(NOISE_FREE, tiny_scene.gt_tracks), FailingTracker3D())
        with pytest.raises(BackendFailureError, match="device lost"):
            tracker.track_all(queries, tiny_scene.frames, tiny_scene.depths, tiny_scene.cams)

    def test_thread_count_does_not_change_output(self, tiny_scene):
        """Test windows tracked in parallel give identical trajectories."""
        queries = make_queries(tiny_scene.gt_tracks)
        spec = SyntheticTrackerSpec(seed=4)
        outputs = []
        for threads in (1, 3):
            tracks, _ = track_all(queries, tiny_scene.frames, tiny_scene.depths, tiny_scene.cams,
                                  synthetic_tracker_2d(spec, tiny_scene.gt_tracks),
                                  synthetic_tracker_3d(spec, tiny_scene.gt_tracks),
                                  TrackerConfig(window_len=4, window_stride=2), threads=threads)
            outputs.append(np.stack([tr.positions for tr in tracks]))
        assert np.array_equal(outputs[0], outputs[1])

    @pytest.mark.slow
    def test_fusion_suppresses_drift(self, rotator_scene):
        """Test fused endpoint error is at most half the raw 3D tracker's over 20 seeds."""
        queries = make_queries(rotator_scene.gt_tracks)
        gt = [tr for tr in rotator_scene.gt_tracks if tr.point_id in set(queries.ids.tolist())]
        ratios = []
        for seed in range(20):
            spec = SyntheticTrackerSpec(seed=seed)
            backends = (synthetic_tracker_2d(spec, rotator_scene.gt_tracks),
                        synthetic_tracker_3d(spec, rotator_scene.gt_tracks))
            args = (queries, rotator_scene.frames, rotator_scene.depths, rotator_scene.cams) + backends
            fused, _ = track_all(*args, mode=TrackingMode.FULL)
            raw, _ = track_all(*args, mode=TrackingMode.NO_ANCHOR)
            ratios.append(track_error(fused, gt).endpoint / track_error(raw, gt).endpoint)
        assert np.median(ratios) <= 0.5

    @pytest.mark.slow
    def test_occluded_geometry(self, rotator_scene):
        """Test occluded-frame error: full within 2% of the diameter, lift-and-hold at least 10x worse."""
        queries = make_queries(rotator_scene.gt_tracks)
        gt = [tr for tr in rotator_scene.gt_tracks if tr.point_id in set(queries.ids.tolist())]
        spec = SyntheticTrackerSpec(seed=0)
        backend2d = synthetic_tracker_2d(spec, rotator_scene.gt_tracks)
        backend3d = synthetic_tracker_3d(spec, rotator_scene.gt_tracks)
        args = (queries, rotator_scene.frames, rotator_scene.depths, rotator_scene.cams)

        full, _ = track_all(*args, backend2d, backend3d, mode=TrackingMode.FULL)
        lifted, _ = track_all(*args, backend2d, None, mode=TrackingMode.NO_3D_INIT)
        held = [Trajectory3D(tr.point_id, hold_last_visible(tr.positions), tr.visibility, partial=True) for tr in lifted]

        occluded = occluded_frames(gt)
        full_err = track_error(full, gt, occluded).occluded_mean
        held_err = track_error(held, gt, occluded).occluded_mean
        assert full_err <= 0.02 * rotator_scene.diameter
        assert held_err >= 10.0 * full_err


class TestSceneSweep:
    """Test tracking across presets."""

    @pytest.mark.parametrize("preset", ["static", "articulated"])
    def test_no_anchor_exact_on_presets(self, preset):
        """Test perfect backends reproduce ground truth on every preset."""
        scene = generate_scene(preset_spec(preset, frames=6, resolution=(24, 24), num_points=48))
        queries = make_queries(scene.gt_tracks)
        tracks, _ = track_all(queries, scene.frames, scene.depths, scene.cams,
                              synthetic_tracker_2d(NOISE_FREE, scene.gt_tracks),
                              synthetic_tracker_3d(NOISE_FREE, scene.gt_tracks),
                              TrackerConfig(window_len=4, window_stride=2), TrackingMode.NO_ANCHOR)
        gt = {tr.point_id: tr for tr in scene.gt_tracks}
        assert all(np.allclose(tr.positions, gt[tr.point_id].positions, atol=1e-6) for tr in tracks)
