import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_local_maxima, separated_keypoints, strict_maxima_count
from hybridkp.codec import (
    CHANNELS,
    PEAK_THRESHOLD,
    HybridMaps,
    encode_maps,
    extract_peaks,
    feature_mask,
    masked_l2_loss,
)
from hybridkp.errors import OutOfBoundsKeypointError


def keypoints_at(uv, rng):
    return [(u, v, rng.normal(size=3), rng.uniform(-30, 30)) for u, v in uv]


class TestEncode:
    def test_empty(self):
        maps = encode_maps([], 8, 9)
        assert maps.stack().shape == (5, 8, 9)
        assert not maps.stack().any()

    def test_single_center_peak(self):
        maps = encode_maps([(32, 32, [0.1, 0.2, 0.3], 4.0)], 64, 64, sigma=1.5)
        assert maps.star[32, 32] == 1.0
        assert maps.star.max() == 1.0
        for dr, dc in [(0, 1), (1, 0), (1, 1), (-1, 2), (-1, -1), (2, -1)]:
            vals = [maps.star[32 + k * dr, 32 + k * dc] for k in range(15)]
            assert all(a > b for a, b in zip(vals, vals[1:]) if b > 0)

    def test_features_on_footprint_only(self):
        maps = encode_maps([(10.2, 5.7, [0.1, -0.2, 0.3], 7.0)], 16, 20)
        r, c = 6, 10
        mask = np.zeros((16, 20), bool)
        mask[r - 1 : r + 2, c - 1 : c + 2] = True
        np.testing.assert_array_equal(maps.canview[:, mask], np.tile([[0.1], [-0.2], [0.3]], 9))
        assert np.all(maps.depth[mask] == 7.0)
        assert not maps.canview[:, ~mask].any() and not maps.depth[~mask].any()
        np.testing.assert_array_equal(feature_mask([(10.2, 5.7)], 16, 20), mask.astype(float))

    def test_rounding_and_edges(self):
        maps = encode_maps([(0.0, 0.0, [1, 1, 1], 1), (9.99, 4.5, [2, 2, 2], 2)], 5, 10)
        assert maps.star[0, 0] == 1.0
        assert maps.star[4, 9] == 1.0  # clipped onto the last pixel
        assert maps.depth[0, 0] == 1 and maps.depth[4, 9] == 2

    def test_overlap_keeps_own_centre(self):
        maps = encode_maps([(4, 4, [1, 0, 0], 1.0), (5, 4, [0, 1, 0], 2.0)], 9, 9)
        assert maps.depth[4, 4] == 1.0 and maps.depth[4, 5] == 2.0
        assert maps.depth[4, 6] == 2.0 and maps.depth[3, 5] == 1.0  # earlier keypoint owns shared ring

    @pytest.mark.parametrize("uv", [(-0.01, 3), (3, -1), (10, 3), (3, 5)])
    def test_out_of_bounds(self, uv):
        with pytest.raises(OutOfBoundsKeypointError) as info:
            encode_maps([(1, 1, [0, 0, 0], 0), (*uv, [0, 0, 0], 0)], 5, 10)
        assert info.value.index == 1

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            encode_maps([], 4, 4, sigma=0)

    def test_star_in_unit_interval(self, rng):
        for _ in range(20):
            uv = rng.uniform(0, 30, (12, 2))
            s = encode_maps(keypoints_at(uv, rng), 30, 30, sigma=rng.uniform(0.3, 4)).star
            assert s.min() >= 0 and s.max() == 1.0


class TestExtract:
    def test_zero(self):
        assert extract_peaks(HybridMaps.zeros(12, 12)) == []

    def test_below_threshold(self):
        maps = HybridMaps.zeros(7, 7)
        maps.star[3, 3] = 0.04
        assert extract_peaks(maps) == []
        maps.star[3, 3] = PEAK_THRESHOLD
        assert extract_peaks(maps) == []
        maps.star[3, 3] = 0.0500001
        assert len(extract_peaks(maps)) == 1

    def test_plateau_reports_first_pixel(self):
        maps = HybridMaps.zeros(6, 6)
        maps.star[2:4, 2:4] = 0.7
        dets = extract_peaks(maps)
        assert [(d.v, d.u) for d in dets] == [(2.0, 2.0)]

    def test_row_major_order_and_readout(self, rng):
        uv = [(40, 3), (5, 20), (30, 20), (2, 50)]
        kps = keypoints_at(uv, rng)
        dets = extract_peaks(encode_maps(kps, 60, 60, sigma=1.0))
        assert [(d.u, d.v) for d in dets] == [(40, 3), (5, 20), (30, 20), (2, 50)]
        for d, kp in zip(dets, kps):
            assert d.w == 1.0
            np.testing.assert_array_equal(d.canview, kp[2])
            assert d.d == kp[3]

    def test_matches_brute_force_on_random_grids(self, rng):
        for _ in range(60):
            h, w = rng.integers(1, 14, 2)
            grid = np.round(rng.random((h, w)) * rng.choice([1, 4, 10]), 0) / 10
            maps = HybridMaps(grid, np.zeros((3, h, w)), np.zeros((h, w)))
            got = [(int(d.v), int(d.u)) for d in extract_peaks(maps)]
            assert got == brute_local_maxima(grid.tolist())
            assert len(got) >= strict_maxima_count(grid)

    def test_round_trip(self, rng):
        for _ in range(100):
            sigma = rng.uniform(0.5, 2.0)
            n = int(rng.integers(1, 9))
            uv = separated_keypoints(rng, n, 64, 64, 6 * sigma)
            if uv is None:
                continue
            kps = keypoints_at(uv, rng)
            dets = extract_peaks(encode_maps(kps, 64, 64, sigma))
            assert len(dets) == n
            pix = np.minimum(np.floor(uv + 0.5), 63)
            by_pix = {(d.u, d.v): d for d in dets}
            for (u, v), kp in zip(pix, kps):
                d = by_pix[(u, v)]
                assert np.abs(d.canview - kp[2]).max() < 1e-12 and abs(d.d - kp[3]) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(st.integers(-8, 8), st.integers(-8, 8), st.integers(0, 2**32 - 1))
    def test_translation_equivariance(self, du, dv, seed):
        rng = np.random.default_rng(seed)
        uv = rng.integers(12, 52, (5, 2)).astype(float)
        kps = keypoints_at(uv, rng)
        moved = [(u + du, v + dv, c, d) for u, v, c, d in kps]
        a = extract_peaks(encode_maps(kps, 64, 64))
        b = extract_peaks(encode_maps(moved, 64, 64))
        assert sorted((d.u + du, d.v + dv) for d in a) == sorted((d.u, d.v) for d in b)

    def test_subpixel_refinement(self):
        maps = HybridMaps.zeros(5, 5)
        x = np.arange(5.0)
        # parabola vertex at u = 2.3, v = 1.8
        maps.star = np.clip(1 - 0.05 * ((x[None, :] - 2.3) ** 2 + (x[:, None] - 1.8) ** 2), 0, 1)
        (d,) = extract_peaks(maps, subpixel=True)
        assert d.u == pytest.approx(2.3, abs=1e-12) and d.v == pytest.approx(1.8, abs=1e-12)
        (plain,) = extract_peaks(maps)
        assert (plain.u, plain.v) == (2.0, 2.0)
        np.testing.assert_array_equal(d.canview, plain.canview)

    def test_subpixel_on_symmetric_peak_is_integer(self):
        (d,) = extract_peaks(encode_maps([(7, 9, [0, 0, 0], 0)], 20, 20), subpixel=True)
        assert (d.u, d.v) == (7.0, 9.0)


class TestMaps:
    def test_stack_round_trip(self, rng):
        arr = rng.random((5, 4, 6))
        assert np.array_equal(HybridMaps.from_stack(arr).stack(), arr)
        assert len(CHANNELS) == 5

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            HybridMaps(np.zeros((3, 3)), np.zeros((3, 3, 4)), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            HybridMaps.from_stack(np.zeros((4, 3, 3)))

    def test_copy_is_deep(self):
        m = HybridMaps.zeros(2, 2)
        c = m.copy()
        c.star[0, 0] = 1
        assert m.star[0, 0] == 0


class TestLoss:
    def test_equal_is_zero(self, rng):
        m = HybridMaps.from_stack(rng.random((5, 6, 6)))
        assert masked_l2_loss(m, m.copy(), np.ones((6, 6))) == 0.0

    def test_zero_mask_ignores_features(self, rng):
        a = HybridMaps.from_stack(rng.random((5, 6, 6)))
        b = a.copy()
        b.canview += rng.normal(size=b.canview.shape)
        b.depth += 3
        assert masked_l2_loss(a, b, np.zeros((6, 6))) == 0.0

    def test_hand_value(self):
        pred = HybridMaps(np.array([[0.5]]), np.zeros((3, 1, 1)), np.zeros((1, 1)))
        gt = HybridMaps(np.array([[1.0]]), np.zeros((3, 1, 1)), np.zeros((1, 1)))
        assert masked_l2_loss(pred, gt, np.ones((1, 1))) == 0.25

    def test_properties(self, rng):
        for _ in range(30):
            a = HybridMaps.from_stack(rng.normal(size=(5, 5, 7)))
            b = HybridMaps.from_stack(rng.normal(size=(5, 5, 7)))
            mask = (rng.random((5, 7)) < 0.4).astype(float)
            la = masked_l2_loss(a, b, mask)
            assert la >= 0 and la == masked_l2_loss(b, a, mask)
            # star compared everywhere, features only on the mask
            expect = np.sum((a.star - b.star) ** 2) + np.sum(mask * ((a.canview - b.canview) ** 2).sum(0)) + np.sum(
                mask * (a.depth - b.depth) ** 2
            )
            assert la == pytest.approx(expect, rel=1e-12)

    def test_feature_mismatch_only_counts_on_mask(self):
        gt = encode_maps([(3, 3, [1, 2, 3], 4)], 8, 8)
        pred = gt.copy()
        pred.depth[7, 7] = 100.0  # off-peak garbage
        mask = feature_mask([(3, 3)], 8, 8)
        assert masked_l2_loss(pred, gt, mask) == 0.0
        pred.depth[3, 3] += 1.0
        assert masked_l2_loss(pred, gt, mask) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            masked_l2_loss(HybridMaps.zeros(2, 2), HybridMaps.zeros(2, 3))
        with pytest.raises(ValueError):
            masked_l2_loss(HybridMaps.zeros(2, 2), HybridMaps.zeros(2, 2), np.ones((3, 3)))
