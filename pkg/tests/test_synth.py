import numpy as np
import pytest

from aeropipe.densemaps import encode
from aeropipe.geometry import iou, separation
from aeropipe.rng import SplitMix64
from aeropipe.synth import (
    SceneConfig,
    SceneGenerationError,
    _cross_fill_ok,
    corrupt_maps,
    crop_dataset,
    generate_scene,
    generate_sequence,
    read_manifest,
    render_intensity,
    write_manifest,
)


class TestSplitMix:
    def test_scalar_vector_stream_identity(self):
        a, b = SplitMix64(123), SplitMix64(123)
        assert [a.next_u64() for _ in range(32)] == b.fill_u64(32).tolist()

    def test_uniform_range(self):
        rng = SplitMix64(5)
        xs = rng.random_array((10000,))
        assert xs.min() >= 0.0 and xs.max() < 1.0
        assert abs(xs.mean() - 0.5) < 0.02

    def test_randint_inclusive_bounds(self):
        rng = SplitMix64(6)
        values = {rng.randint(3, 5) for _ in range(200)}
        assert values == {3, 4, 5}

    def test_normals_standardish(self):
        rng = SplitMix64(7)
        xs = rng.normal_array((20000,))
        assert abs(xs.mean()) < 0.03
        assert abs(xs.std() - 1.0) < 0.03


class TestGenerateScene:
    def test_zero_boxes(self):
        cfg = SceneConfig(box_count=(0, 0))
        scene = generate_scene(cfg, seed=1)
        assert scene.records == []
        assert not scene.maps.seg.any()

    def test_deterministic_per_seed(self):
        a = generate_scene(SceneConfig(), 99)
        b = generate_scene(SceneConfig(), 99)
        assert [r.box for r in a.records] == [r.box for r in b.records]
        assert [(r.primary_action, r.secondary_action) for r in a.records] == [
            (r.primary_action, r.secondary_action) for r in b.records
        ]
        np.testing.assert_array_equal(a.maps.reg, b.maps.reg)

    def test_pairwise_gap_brute_force(self):
        cfg = SceneConfig(box_count=(10, 10))
        scene = generate_scene(cfg, 3)
        boxes = scene.boxes
        assert len(boxes) == 10
        for i, a in enumerate(boxes):
            for b in boxes[i + 1 :]:
                assert separation(a, b) >= cfg.min_gap
                assert iou(a, b) == 0.0

    def test_labels_within_vocabulary(self):
        scene = generate_scene(SceneConfig(box_count=(12, 12)), 4)
        for r in scene.records:
            assert 0 <= r.primary_action < 4
            assert 0 <= r.secondary_action < 5

    def test_infeasible_packing_raises(self):
        cfg = SceneConfig(grid=(64, 64), box_count=(30, 30), side_range=(20, 20), max_attempts=500)
        with pytest.raises(SceneGenerationError, match="failed to pack"):
            generate_scene(cfg, 1)

    def test_cross_fill_certificate_holds(self):
        cfg = SceneConfig(box_count=(12, 12))
        for seed in range(5):
            boxes = generate_scene(cfg, seed).boxes
            assert _cross_fill_ok(boxes, cfg.max_cross_fill)

    def test_maps_match_direct_encode(self):
        scene = generate_scene(SceneConfig(), 11)
        direct = encode(scene.boxes, (640, 360))
        np.testing.assert_array_equal(scene.maps.seg, direct.seg)
        np.testing.assert_array_equal(scene.maps.reg, direct.reg)


class TestGenerateSequence:
    def test_zero_velocity_static_frames(self):
        cfg = SceneConfig(box_count=(4, 4), velocity_range=(0.0, 0.0))
        scenes = generate_sequence(cfg, frames=5, seed=2)
        first = [r.box for r in scenes[0].records]
        for scene in scenes[1:]:
            assert [r.box for r in scene.records] == first

    def test_track_ids_and_labels_persist(self):
        scenes = generate_sequence(SceneConfig(box_count=(5, 5)), frames=10, seed=3)
        base = {r.track_id: (r.primary_action, r.secondary_action) for r in scenes[0].records}
        for scene in scenes:
            assert {r.track_id for r in scene.records} == set(base)
            for r in scene.records:
                assert base[r.track_id] == (r.primary_action, r.secondary_action)

    def test_every_frame_keeps_scene_invariants(self):
        cfg = SceneConfig(box_count=(8, 8))
        scenes = generate_sequence(cfg, frames=30, seed=4)
        for scene in scenes:
            boxes = scene.boxes
            for b in boxes:
                assert b.within_grid(640, 360)
            for i, a in enumerate(boxes):
                for b in boxes[i + 1 :]:
                    assert separation(a, b) >= cfg.min_gap
            assert _cross_fill_ok(boxes, cfg.max_cross_fill)

    def test_boxes_actually_move(self):
        scenes = generate_sequence(SceneConfig(box_count=(3, 3)), frames=8, seed=5)
        first = [r.box for r in scenes[0].records]
        last = [r.box for r in scenes[-1].records]
        assert first != last


class TestCorruptMaps:
    def test_zero_noise_is_identity(self):
        scene = generate_scene(SceneConfig(box_count=(3, 3)), 6)
        out = corrupt_maps(scene.maps, 0.0, 0.0, seed=1)
        np.testing.assert_array_equal(out.reg, scene.maps.reg)
        np.testing.assert_array_equal(out.seg, scene.maps.seg)

    def test_full_flip_inverts_segmentation(self):
        scene = generate_scene(SceneConfig(box_count=(3, 3)), 7)
        out = corrupt_maps(scene.maps, 0.0, 1.0, seed=2)
        np.testing.assert_array_equal(out.seg, 1.0 - scene.maps.seg)

    def test_noise_amplitude_bound_exhaustive(self):
        scene = generate_scene(SceneConfig(box_count=(5, 5)), 8)
        out = corrupt_maps(scene.maps, 0.05, 0.0, seed=3)
        delta = np.abs(out.reg - scene.maps.reg)
        assert delta.max() <= 0.05
        assert out.reg.min() >= 0.0 and out.reg.max() <= 1.0

    def test_deterministic_per_seed(self):
        scene = generate_scene(SceneConfig(box_count=(4, 4)), 9)
        a = corrupt_maps(scene.maps, 0.05, 0.01, seed=4)
        b = corrupt_maps(scene.maps, 0.05, 0.01, seed=4)
        np.testing.assert_array_equal(a.reg, b.reg)
        np.testing.assert_array_equal(a.seg, b.seg)

    def test_flip_probability_rate(self):
        scene = generate_scene(SceneConfig(box_count=(4, 4)), 10)
        out = corrupt_maps(scene.maps, 0.0, 0.01, seed=5)
        flipped = (out.seg != scene.maps.seg).mean()
        assert 0.005 < flipped < 0.015


class TestCropDataset:
    def test_deterministic(self):
        a = crop_dataset(seed=11, n_samples=50)
        b = crop_dataset(seed=11, n_samples=50)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.primary_labels, b.primary_labels)

    def test_zero_noise_exactly_separable(self):
        ds = crop_dataset(seed=12, n_samples=80, noise=0.0)
        ped = ds.pedestrian
        flat = ds.features.reshape(len(ds.features), -1)
        pair = ds.primary_labels[ped] * 5 + ds.secondary_labels[ped]
        for row, cls in zip(flat[ped], pair):
            np.testing.assert_array_equal(row, ds.class_means[cls])

    def test_nearest_mean_classifier_is_exact(self):
        """The separability certificate: nearest class mean scores 100%."""
        ds = crop_dataset(seed=13)
        ped = ds.pedestrian
        flat = ds.features.reshape(len(ds.features), -1)[ped]
        pair = ds.primary_labels[ped] * 5 + ds.secondary_labels[ped]
        d = ((flat[:, None, :] - ds.class_means[None, :, :]) ** 2).sum(axis=2)
        assert (d.argmin(axis=1) == pair).all()

    def test_background_fraction(self):
        ds = crop_dataset(seed=14, n_samples=400, background_fraction=0.25)
        frac = 1.0 - ds.pedestrian.mean()
        assert 0.15 < frac < 0.35
        assert (ds.primary_labels[~ds.pedestrian] == -1).all()


class TestRenderAndManifest:
    def test_render_intensity_range_and_marks(self):
        scene = generate_scene(SceneConfig(box_count=(4, 4)), 15)
        frame = render_intensity(scene.records, (640, 360))
        assert frame.shape == (360, 640)
        assert frame.min() >= 0.0 and frame.max() <= 1.0
        for r in scene.records:
            assert frame[r.box.y0, r.box.x0] > 0.25

    def test_manifest_roundtrip(self, tmp_path):
        path = str(tmp_path / "manifest.txt")
        entries = [(0, "a.txt", "f0.aero"), (1, "a.txt", "f1.aero")]
        write_manifest(path, 42, (640, 360), entries)
        seed, grid, back = read_manifest(path)
        assert (seed, grid, back) == (42, (640, 360), entries)
