"""
Stereo matchers and the disparity -> depth -> point cloud chain.

The block matcher is checked against an exhaustive per-pixel SAD search on
a small random pair before it is trusted on rendered scenes.
"""

import numpy as np
import pytest

from errors import ConfigError
from geometry import AttackGeometry, StereoRig
from render import SceneSpec, StereoFrame, ground_truth_disparity, render_scene
from depth import (
    INVALID,
    Algorithm,
    DepthMap,
    DisparityMap,
    MatcherConfig,
    aggregate_paths,
    auto_disparity_range,
    census_cost_volume,
    census_transform,
    match,
    prediction_disparity_range,
    sad_cost_volume,
    to_depth,
    to_gray,
    to_point_cloud,
)


def _frame(left_gray, right_gray):
    h, w = left_gray.shape
    left, right = (np.repeat(g[:, :, None], 3, axis=2).astype(np.uint8) for g in (left_gray, right_gray))
    return StereoFrame(left, right, w, h)


def _brute_force_sad(left, right, max_disp, block):
    """Smallest-disparity argmin of SAD over every window that fits both images; -1 where none fits."""
    left = left.astype(np.int64)
    right = right.astype(np.int64)
    h, w = left.shape
    half = block // 2
    out = np.full((h, w), -1, dtype=np.int64)
    for r in range(half, h - half):
        for c in range(half, w - half):
            patch = left[r - half:r + half + 1, c - half:c + half + 1]
            best, best_d = None, -1
            for d in range(0, max_disp + 1):
                if c - d - half < 0:
                    break
                cand = right[r - half:r + half + 1, c - d - half:c - d + half + 1]
                sad = int(np.abs(patch - cand).sum())
                if best is None or sad < best:
                    best, best_d = sad, d
            out[r, c] = best_d
    return out


@pytest.fixture
def shifted_pair():
    rng = np.random.default_rng(11)
    base = rng.integers(0, 256, size=(16, 24), dtype=np.uint8)
    left = base[:, 0:16]
    right = base[:, 5:21]
    return left, right


class TestMatcherConfig:

    @pytest.mark.parametrize("kwargs", [
        {"block_size": 4},
        {"block_size": 1},
        {"min_disp": 10, "max_disp": 10},
        {"sgm_p1": 32, "sgm_p2": 8},
        {"uniqueness_ratio": 0.9},
        {"lr_consistency_px": -1.0},
        {"algorithm": "census"},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            MatcherConfig(**kwargs)

    def test_zero_penalties_allowed(self):
        assert MatcherConfig(sgm_p1=0, sgm_p2=0).sgm_p2 == 0

    def test_border(self):
        assert MatcherConfig(block_size=9).border_px == 4
        assert MatcherConfig(algorithm="sgm").border_px == 2
        assert MatcherConfig(algorithm="sgm").algorithm is Algorithm.SEMI_GLOBAL


class TestPreprocessing:

    def test_gray_weights(self):
        px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255], [10, 10, 10]]], dtype=np.uint8)
        np.testing.assert_array_equal(to_gray(px), [[76, 150, 29, 10]])

    def test_census_bits(self):
        gray = np.zeros((5, 5), dtype=np.uint8)
        gray[2, 2] = 100
        codes = census_transform(gray)
        assert codes[2, 2] == 0xFFFFFF
        assert codes.dtype == np.uint32

    def test_census_cost_is_hamming(self):
        rng = np.random.default_rng(0)
        gray = rng.integers(0, 256, size=(12, 12), dtype=np.uint8)
        codes = census_transform(gray)
        vol = census_cost_volume(codes, codes, 0, 3)
        assert np.all(vol[:, :, 0] == 0)
        expected = bin(int(codes[6, 6]) ^ int(codes[6, 4])).count("1")
        assert vol[6, 6, 2] == expected
        assert vol[6, 1, 2] == 25

    def test_sad_volume_marks_out_of_range(self, shifted_pair):
        left, right = shifted_pair
        vol = sad_cost_volume(left, right, 0, 4, 3)
        assert vol[5, 4, 4] > 10 ** 12
        assert vol[5, 5, 4] < 10 ** 6


class TestAggregation:

    def test_zero_penalties_sum_eight_copies(self):
        rng = np.random.default_rng(1)
        cost = rng.integers(0, 25, size=(6, 7, 4)).astype(np.int32)
        # no penalties: every path cost collapses to the raw cost
        np.testing.assert_array_equal(aggregate_paths(cost, 0, 0), 8 * cost)

    def test_uniform_cost_keeps_winner(self):
        cost = np.full((5, 5, 6), 10, dtype=np.int32)
        cost[:, :, 3] = 0
        total = aggregate_paths(cost, 8, 32)
        assert np.all(np.argmin(total, axis=2) == 3)


class TestBlockMatching:

    def test_matches_brute_force_oracle(self, shifted_pair):
        left, right = shifted_pair
        cfg = MatcherConfig(block_size=5, min_disp=0, max_disp=8, uniqueness_ratio=1.0,
                            lr_consistency_px=None, subpixel=False)
        disp = match(_frame(left, right), cfg)
        oracle = _brute_force_sad(to_gray(_frame(left, right).left), to_gray(_frame(left, right).right), 8, 5)
        assert disp.valid_count > 0
        np.testing.assert_array_equal(disp.values[disp.valid], oracle[disp.valid])
        # columns where the true match window fits both images
        inner = disp.valid[:, 7:]
        assert inner.any()
        assert np.all(disp.values[:, 7:][inner] == 5)

    @pytest.mark.parametrize("seed", range(50))
    def test_random_pairs_match_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        left = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
        right = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
        cfg = MatcherConfig(block_size=5, min_disp=0, max_disp=15, uniqueness_ratio=1.0,
                            lr_consistency_px=None, subpixel=False)
        disp = match(_frame(left, right), cfg)
        oracle = _brute_force_sad(left, right, 15, 5)
        assert disp.valid_count > 0
        np.testing.assert_array_equal(disp.values[disp.valid], oracle[disp.valid])

    def test_identical_images_give_zero(self):
        rng = np.random.default_rng(4)
        img = rng.integers(0, 256, size=(20, 30), dtype=np.uint8)
        disp = match(_frame(img, img), MatcherConfig(block_size=5, max_disp=6))
        assert disp.valid_count > 0
        assert np.all(disp.values[disp.valid] == 0.0)
        assert np.all(disp.values[~disp.valid] == INVALID)

    def test_border_is_invalid(self, shifted_pair):
        left, right = shifted_pair
        disp = match(_frame(left, right), MatcherConfig(block_size=5, max_disp=8))
        assert not disp.valid[:2].any()
        assert not disp.valid[:, -2:].any()

    def test_block_larger_than_image(self):
        img = np.zeros((4, 4), dtype=np.uint8)
        with pytest.raises(ConfigError):
            match(_frame(img, img), MatcherConfig(block_size=5, max_disp=2))

    def test_range_wider_than_image(self):
        img = np.zeros((10, 10), dtype=np.uint8)
        with pytest.raises(ConfigError):
            match(_frame(img, img), MatcherConfig(block_size=3, max_disp=12))

    def test_night_scene_is_all_invalid(self, small_rig):
        frame = render_scene(small_rig, SceneSpec.flat_textured(ambient_lux=0.0))
        assert match(frame, MatcherConfig(max_disp=16)).valid_count == 0


class TestWallDisparity:

    def test_block_matching_21_px(self, rig):
        frame = render_scene(rig, SceneSpec.wall(4.0, ambient_lux=4000.0, seed=2))
        disp = match(frame, MatcherConfig(min_disp=0, max_disp=40))
        assert disp.valid_count > 0.5 * rig.image_width_px * rig.image_height_px
        assert np.median(disp.values[disp.valid]) == pytest.approx(21.0, abs=0.5)

    def test_semi_global_matches_ground_truth(self, small_rig):
        # f = 350 px, so a 3.5 m wall sits at 12 px
        frame = render_scene(small_rig, SceneSpec.wall(3.5, ambient_lux=4000.0, seed=2))
        disp = match(frame, MatcherConfig(algorithm="sgm", min_disp=0, max_disp=24))
        assert disp.valid_count > 0.5 * small_rig.image_width_px * small_rig.image_height_px
        assert np.median(disp.values[disp.valid]) == pytest.approx(12.0, abs=0.5)

    def test_subpixel_error_on_fractional_wall(self, rig):
        wall = SceneSpec.wall(rig.focal_length_px * rig.baseline_m / 21.4, ambient_lux=4000.0, seed=4)
        frame = render_scene(rig, wall)
        disp = match(frame, MatcherConfig(min_disp=0, max_disp=40))
        truth = ground_truth_disparity(rig, wall)
        err = np.abs(disp.values[disp.valid] - truth[disp.valid])
        assert truth[0, 0] == pytest.approx(21.4)
        assert disp.valid_count > 0.5 * rig.image_width_px * rig.image_height_px
        assert err.mean() <= 0.5
        assert np.percentile(err, 90) <= 0.5

    def test_mirrored_swap_matches_right_view(self, rig):
        frame = render_scene(rig, SceneSpec.wall(4.0, ambient_lux=4000.0, seed=5))
        cfg = MatcherConfig(min_disp=0, max_disp=40, subpixel=False)
        mirrored = StereoFrame(frame.right[:, ::-1].copy(), frame.left[:, ::-1].copy(), frame.width, frame.height)
        direct = match(frame, cfg)
        swapped = match(mirrored, cfg)
        # left column x sees right column x - 21, which is mirrored column w - 1 - (x - 21)
        back = swapped.values[:, ::-1]
        back_valid = swapped.valid[:, ::-1]
        a_vals, a_valid = direct.values[:, 60:600], direct.valid[:, 60:600]
        b_vals, b_valid = back[:, 39:579], back_valid[:, 39:579]
        both = a_valid & b_valid
        assert both.sum() > 0.9 * a_valid.sum()
        np.testing.assert_array_equal(a_vals[both], b_vals[both])
        assert np.all(a_vals[both] == 21.0)

    def test_semi_global_identical_images(self):
        rng = np.random.default_rng(8)
        img = rng.integers(0, 256, size=(24, 32), dtype=np.uint8)
        disp = match(_frame(img, img), MatcherConfig(algorithm="sgm", max_disp=8))
        assert disp.valid_count > 0
        assert np.all(disp.values[disp.valid] == 0.0)


class TestToDepth:

    def _disp(self, values, valid):
        return DisparityMap(np.asarray(values, dtype=np.float64), np.asarray(valid), (0, 64))

    def test_conversion_and_cutoff(self):
        rig = StereoRig(700.0, 0.12, 3, 1)
        disp = self._disp([[21.0, 0.05, 42.0]], [[True, True, False]])
        depth = to_depth(disp, rig)
        assert depth.values[0, 0] == pytest.approx(4.0)
        assert not depth.valid[0, 1]
        assert not depth.valid[0, 2]
        assert depth.values[0, 1] == INVALID

    def test_shape_mismatch(self, rig):
        with pytest.raises(ConfigError):
            to_depth(self._disp([[1.0]], [[True]]), rig)


class TestPointCloud:

    def test_principal_ray(self):
        rig = StereoRig(700.0, 0.12, 5, 5, principal_point=(2.0, 2.0))
        values = np.full((5, 5), INVALID)
        valid = np.zeros((5, 5), dtype=bool)
        values[2, 2], valid[2, 2] = 4.0, True
        cloud = to_point_cloud(DepthMap(values, valid, rig))
        np.testing.assert_allclose(cloud, [[0.0, 0.0, 4.0]])

    def test_empty(self, rig):
        depth = DepthMap(np.full(rig.shape, INVALID), np.zeros(rig.shape, dtype=bool), rig)
        assert to_point_cloud(depth).shape == (0, 3)

    def test_wall_cloud_is_flat(self, rig):
        frame = render_scene(rig, SceneSpec.wall(4.0, ambient_lux=4000.0, seed=3))
        # integer ground-truth shift, so the parabola fit is left out
        depth = to_depth(match(frame, MatcherConfig(max_disp=40, subpixel=False)), rig)
        z = to_point_cloud(depth)[:, 2]
        assert z.size > 0
        assert z.max() - z.min() < 0.02 * 4.0


class TestAutoDisparityRange:

    def test_covers_fake_disparity(self, rig):
        lo, hi = auto_disparity_range(rig, AttackGeometry(1.0, 9.0))
        assert lo == 0
        assert hi >= 700 * 1.12 / 9

    def test_capped_by_width(self):
        rig = StereoRig(700.0, 0.12, 100, 60)
        _, hi = auto_disparity_range(rig, AttackGeometry(1.0, 2.0), block_size=9)
        assert hi == 100 - 9 - 1


class TestPredictionDisparityRange:

    def test_window_around_x_beams(self, rig):
        # 196 px, +-10% plus 3 px
        assert prediction_disparity_range(rig, AttackGeometry(1.0, 4.0)) == (173, 219)

    def test_window_spans_every_feasible_prediction(self, rig):
        geo = AttackGeometry(1.0, 6.0, pattern="triangle", mode="combined")
        lo, hi = prediction_disparity_range(rig, geo)
        assert lo <= 700 * 0.88 / 6.0 * 0.9
        assert hi >= 700 * 1.12 / 6.0 * 1.1

    def test_nothing_feasible(self, rig):
        assert prediction_disparity_range(rig, AttackGeometry(1.0, 4.0, pattern="x", mode="orbs")) is None

    def test_beyond_image_width(self, rig):
        assert prediction_disparity_range(rig, AttackGeometry(2.0, 2.0)) is None

    def test_capped_by_width(self, rig):
        geo = AttackGeometry(2.0, 2.0, pattern="trapezoid", mode="orbs")
        assert prediction_disparity_range(rig, geo) == (589, 640 - 9 - 1)
