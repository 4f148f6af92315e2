import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maskflow.core import AssocConfig, BBox, Detection, FlowField, Mask, iou, mask_centroid, mask_pixels
from maskflow.errors import BadValue, EmptyMask

from conftest import mask_from_pixels

boxes = st.builds(BBox,
                  st.floats(-50, 50), st.floats(-50, 50),
                  st.floats(0.5, 40), st.floats(0.5, 40))


class TestBBox:
    def test_center_and_area(self):
        b = BBox(10, 20, 4, 8)
        assert b.center() == (12, 24)
        assert b.area() == 32

    @pytest.mark.parametrize("w,h", [(0, 1), (1, 0), (-1, 3)])
    def test_rejects_non_positive_size(self, w, h):
        with pytest.raises(ValueError):
            BBox(0, 0, w, h)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BBox(float("nan"), 0, 1, 1)


class TestIoU:
    def test_identical(self):
        assert iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(100, 100, 5, 5)) == 0.0

    def test_half_shift(self):
        # intersection 50, union 150
        assert iou(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) == pytest.approx(1 / 3)

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == pytest.approx(iou(b, a))
        assert 0.0 <= v <= 1.0

    @given(boxes, boxes)
    def test_one_only_for_identical(self, a, b):
        if iou(a, b) == 1.0:
            assert a.as_tuple() == pytest.approx(b.as_tuple())


class TestMask:
    def test_all_background_has_no_pixels(self):
        m = Mask(3, 3, (9,))
        assert mask_pixels(m).shape == (0, 2)
        assert m.pixel_count() == 0

    def test_full_mask(self):
        px = mask_pixels(Mask(2, 2, (0, 4)))
        assert px.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_column_major_decode(self):
        # column 0: bg, fg ; column 1: bg, fg
        px = mask_pixels(Mask(2, 2, (1, 1, 1, 1)))
        assert px.tolist() == [[0, 1], [1, 1]]

    def test_run_sum_checked(self):
        with pytest.raises(ValueError):
            Mask(2, 2, (1, 1))

    def test_zero_run_only_leading(self):
        Mask(2, 2, (0, 4))
        with pytest.raises(ValueError):
            Mask(2, 2, (2, 0, 2))

    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_encode_decode_roundtrip(self, h, w, data):
        bits = data.draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
        grid = np.array(bits, dtype=bool).reshape(h, w)
        m = Mask.from_array(grid)
        assert np.array_equal(m.to_array(), grid)
        assert Mask.from_array(m.to_array()).runs == m.runs
        assert m.pixel_count() == sum(m.runs[1::2]) == grid.sum()


class TestCentroid:
    def test_square(self):
        m = mask_from_pixels(4, 4, [(0, 0), (1, 0), (0, 1), (1, 1)])
        assert mask_centroid(m) == (0.5, 0.5)

    def test_single_pixel(self):
        assert mask_centroid(mask_from_pixels(10, 10, [(3, 7)])) == (3.0, 7.0)

    def test_ring_centroid_is_background(self):
        m = mask_from_pixels(3, 3, [(0, 0), (2, 0), (0, 2), (2, 2)])
        assert mask_centroid(m) == (1.0, 1.0)
        assert not m.to_array()[1, 1]

    def test_empty_raises(self):
        with pytest.raises(EmptyMask):
            mask_centroid(Mask(2, 2, (4,)))

    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=20),
           st.integers(0, 10), st.integers(0, 10))
    def test_translation_equivariance(self, pixels, dx, dy):
        a = mask_centroid(mask_from_pixels(20, 20, pixels))
        b = mask_centroid(mask_from_pixels(20, 20, [(x + dx, y + dy) for x, y in pixels]))
        assert b[0] == pytest.approx(a[0] + dx)
        assert b[1] == pytest.approx(a[1] + dy)


class TestFlowAndDetection:
    def test_flow_shape_checked(self):
        with pytest.raises(ValueError):
            FlowField(2, 3, np.zeros((3, 2)), np.zeros((3, 2)))

    def test_flow_finite(self):
        u = np.zeros((2, 2))
        u[0, 0] = math.inf
        with pytest.raises(ValueError):
            FlowField(2, 2, u, np.zeros((2, 2)))

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            Detection(1, 0, BBox(0, 0, 1, 1), 1.5)


class TestConfig:
    def test_published_defaults(self):
        c = AssocConfig()
        assert (c.lambda_ilm, c.lambda_p, c.lambda_c, c.tau_d, c.cluster_iou_thresh) == (
            1.0, 0.2, 1.0, 0.1, 0.3)

    @pytest.mark.parametrize("kw", [dict(tau_d=-1), dict(cluster_iou_thresh=1.0),
                                    dict(low_conf_thresh=0.7, high_conf_thresh=0.6),
                                    dict(low_conf_thresh=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(BadValue):
            AssocConfig(**kw).validate()

    def test_baseline_disables_pixel_and_appearance_cues(self):
        c = AssocConfig.baseline()
        assert not any([c.pmm_enabled, c.cdm_enabled, c.dbc_enabled, c.careid_enabled,
                        c.appearance_enabled])
        assert c.lambda_ilm == 1.0
