import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demotrack.geometry import (ActionDelta, BBox, DomainError, apply_action, box_delta,
                                center_distance, clamp_size, dilate_box, floor_to_grid, iou,
                                quantized_reward)

REWARD_IMAGE = {-1.0} | {k / 10 for k in range(11)}

sizes = st.floats(0.5, 200.0)
coords = st.floats(-500.0, 500.0)
boxes = st.builds(BBox, coords, coords, sizes, sizes)
deltas = st.builds(ActionDelta, *(st.floats(-0.9, 0.9),) * 4)


def raster_iou(a, b, extent=64):
    """Count unit pixels covered by integer boxes."""
    grid_a = np.zeros((extent, extent), bool)
    grid_b = np.zeros((extent, extent), bool)
    grid_a[a[1]:a[1] + a[3], a[0]:a[0] + a[2]] = True
    grid_b[b[1]:b[1] + b[3], b[0]:b[0] + b[2]] = True
    inter = np.logical_and(grid_a, grid_b).sum()
    union = np.logical_or(grid_a, grid_b).sum()
    return inter / union


class TestIoU:
    def test_identity(self):
        assert iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0

    def test_half_shift(self):
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-12)
        assert raster_iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)

    def test_matches_rasterization(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a = (*rng.integers(0, 30, 2), *rng.integers(1, 30, 2))
            b = (*rng.integers(0, 30, 2), *rng.integers(1, 30, 2))
            assert abs(iou(BBox(*map(float, a)), BBox(*map(float, b))) - raster_iou(a, b)) <= 1e-3

    @pytest.mark.parametrize("bad", [BBox(0, 0, 0, 5), BBox(0, 0, 5, -1)])
    def test_degenerate_rejected(self, bad):
        with pytest.raises(DomainError):
            iou(bad, BBox(0, 0, 5, 5))

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)

    @given(boxes)
    def test_one_only_on_identical(self, a):
        assert iou(a, a) == 1.0
        shifted = BBox(a.x + a.w * 0.01, a.y, a.w, a.h)
        assert iou(a, shifted) < 1.0

    @given(boxes, st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_monotone_in_offset(self, a, far, near):
        near, far = sorted((near, far))
        f = BBox(a.x + far * a.w, a.y + far * a.h, a.w, a.h)
        n = BBox(a.x + near * a.w, a.y + near * a.h, a.w, a.h)
        assert iou(a, n) >= iou(a, f) - 1e-12


class TestApplyAction:
    def test_identity(self):
        assert apply_action(ActionDelta(0, 0, 0, 0), BBox(10, 20, 40, 60)) == BBox(10, 20, 40, 60)

    def test_substitution(self):
        b = apply_action(ActionDelta(0.1, -0.05, 0.2, 0), BBox(10, 20, 40, 60))
        assert b.as_array() == pytest.approx([14, 17, 48, 60], abs=1e-12)

    def test_extreme_action_is_degenerate(self):
        b = apply_action(ActionDelta(-1, -1, -1, -1), BBox(0, 0, 10, 10))
        assert b.w == 0 and b.degenerate
        fixed = clamp_size(b)
        assert fixed.w == pytest.approx(1e-3) and not fixed.degenerate

    def test_no_frame_clamping(self):
        b = apply_action(ActionDelta(-1, 0, 0, 0), BBox(0, 0, 10, 10))
        assert b.x == -10


class TestBoxDelta:
    def test_identity(self):
        delta, clipped = box_delta(BBox(3, 4, 5, 6), BBox(3, 4, 5, 6))
        assert tuple(delta) == (0, 0, 0, 0) and not clipped

    def test_clipping(self):
        delta, clipped = box_delta(BBox(30, 0, 10, 10), BBox(0, 0, 10, 10))
        assert delta.dx == 1.0 and clipped

    def test_degenerate_reference(self):
        with pytest.raises(DomainError):
            box_delta(BBox(0, 0, 1, 1), BBox(0, 0, 0, 1))

    def test_round_trip_bulk(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(-0.9, 0.9, (100_000, 4))
        xy = rng.uniform(-500, 500, (100_000, 2))
        wh = rng.uniform(0.5, 300, (100_000, 2))
        worst = 0.0
        for row, p, s in zip(a, xy, wh):
            prev = BBox(p[0], p[1], s[0], s[1])
            back, clipped = box_delta(apply_action(ActionDelta(*row), prev), prev)
            assert not clipped
            worst = max(worst, float(np.max(np.abs(back.as_array() - row))))
        assert worst <= 1e-9

    @given(deltas, boxes)
    def test_round_trip_property(self, a, b):
        back, clipped = box_delta(apply_action(a, b), b)
        assert not clipped
        assert np.max(np.abs(back.as_array() - a.as_array())) <= 1e-9

    @given(boxes, boxes)
    def test_always_in_action_space(self, cur, prev):
        delta, clipped = box_delta(cur, prev)
        assert all(-1.0 <= v <= 1.0 for v in delta)


class TestQuantizedReward:
    @pytest.mark.parametrize("value, expected", [
        (0.49, -1.0), (0.5, 0.0), (0.73, 0.4), (1.0, 1.0), (0.75, 0.5), (0.0, -1.0), (0.55, 0.1),
    ])
    def test_examples(self, value, expected):
        assert quantized_reward(value) == pytest.approx(expected, abs=1e-12)

    def test_image_exact(self):
        grid = np.linspace(0, 1, 200_001)
        image = {quantized_reward(float(v)) for v in grid}
        assert image == REWARD_IMAGE

    def test_grid_points_floor_to_themselves(self):
        for k in range(21):
            assert floor_to_grid(k * 0.05) == pytest.approx(k / 20, abs=1e-15)

    @pytest.mark.parametrize("bad", [-0.01, 1.01, math.nan])
    def test_out_of_domain(self, bad):
        with pytest.raises(DomainError):
            quantized_reward(bad)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone(self, a, b):
        a, b = sorted((a, b))
        assert quantized_reward(a) <= quantized_reward(b)

    @given(st.integers(10, 19), st.floats(0.0, 0.0499))
    def test_constant_between_grid_steps(self, k, frac):
        base = k / 20
        assert quantized_reward(base) == quantized_reward(min(base + frac, 1.0)) or frac >= 0.0499


class TestDilate:
    def test_identity(self):
        assert dilate_box(BBox(0, 0, 10, 10), 1) == BBox(0, 0, 10, 10)

    def test_example(self):
        assert dilate_box(BBox(10, 10, 20, 10), 1.5).as_array() == pytest.approx([5, 7.5, 30, 15])

    def test_bad_factor(self):
        with pytest.raises(DomainError):
            dilate_box(BBox(0, 0, 1, 1), 0)

    @given(boxes, st.floats(0.1, 5.0))
    def test_center_and_aspect(self, b, k):
        d = dilate_box(b, k)
        assert center_distance(b, d) <= 1e-12 * max(1.0, abs(b.x) + abs(b.y) + b.w + b.h) * 10
        assert d.w / d.h == pytest.approx(b.w / b.h, rel=1e-12)
