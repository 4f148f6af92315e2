import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskflow.core import BBox
from maskflow.dataio import TrackRecord
from maskflow.errors import EmptyGroundTruth
from maskflow.evalmetrics import (combine, compute_idf1, compute_mota, correspondences, evaluate,
                                  frame_match)


def rec(t, i, x, y=0.0, w=10.0, h=10.0):
    return TrackRecord(t, i, BBox(x, y, w, h), 1.0)


def two_lanes(n=10):
    return [rec(t, k, 20.0 * t, 40.0 * k) for t in range(1, n + 1) for k in (1, 2)]


class TestFrameMatch:
    def test_identical(self):
        boxes = [BBox(0, 0, 10, 10), BBox(50, 0, 10, 10)]
        assert frame_match(boxes, boxes) == [(0, 0), (1, 1)]

    def test_empty_predictions(self):
        corr = correspondences([rec(1, 1, 0), rec(1, 2, 50)], [])
        assert corr[0].fn == 2 and corr[0].matches == []

    def test_one_gt_two_preds(self):
        corr = correspondences([rec(1, 1, 0)], [rec(1, 7, 1), rec(1, 8, 2)])
        assert len(corr[0].matches) == 1 and corr[0].fp == 1 and corr[0].fn == 0

    def test_threshold_inclusive(self):
        a, b = BBox(0, 0, 10, 10), BBox(0, 0, 10, 5)
        assert frame_match([a], [b], 0.5) == [(0, 0)]
        assert frame_match([a], [BBox(4, 0, 10, 10)], 0.5) == []


class TestMOTA:
    def test_perfect(self):
        gt = two_lanes()
        assert compute_mota(correspondences(gt, gt)) == (1.0, 0, 0, 0)

    def test_one_miss(self):
        gt = [rec(t, 1, 20.0 * t) for t in range(1, 11)]
        pred = gt[:4] + gt[5:]
        mota, fp, fn, idsw = compute_mota(correspondences(gt, pred))
        assert (mota, fp, fn, idsw) == (0.9, 0, 1, 0)

    def test_single_identity_switch(self):
        gt = two_lanes(10)
        # the second lane changes predicted id at frame 6
        pred = [TrackRecord(r.frame, r.track_id if r.track_id == 1 or r.frame <= 5 else 9, r.box, 1.0)
                for r in gt]
        mota, fp, fn, idsw = compute_mota(correspondences(gt, pred))
        assert idsw == 1
        assert mota == 1 - 1 / 20

    def test_empty_ground_truth(self):
        with pytest.raises(EmptyGroundTruth):
            compute_mota(correspondences([], [rec(1, 1, 0)]))

    def test_continuity_avoids_spurious_switch(self):
        # two gt boxes coincide at frame 2; a single prediction keeps following gt 1
        gt = [rec(1, 1, 0), rec(1, 2, 30), rec(2, 1, 15), rec(2, 2, 15), rec(3, 1, 30), rec(3, 2, 0)]
        pred = [rec(1, 5, 0), rec(2, 5, 15), rec(3, 5, 30)]
        _, _, _, idsw = compute_mota(correspondences(gt, pred))
        assert idsw == 0


class TestIDF1:
    def test_perfect(self):
        gt = two_lanes()
        assert compute_idf1(gt, gt)[0] == 1.0

    def test_half_split(self):
        gt = [rec(t, 1, 20.0 * t) for t in range(1, 11)]
        pred = [TrackRecord(r.frame, 1 if r.frame <= 5 else 2, r.box, 1.0) for r in gt]
        assert compute_idf1(gt, pred) == (0.5, 5, 5, 5)

    def test_empty_predictions(self):
        assert compute_idf1(two_lanes(), [])[0] == 0.0


class TestProperties:
    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 4), st.integers(0, 9)),
                    min_size=1, max_size=25, unique_by=lambda r: (r[0], r[1])))
    def test_self_evaluation_is_perfect(self, raw):
        gt = [rec(t, i, 15.0 * x, 15.0 * i) for t, i, x in raw]
        r = evaluate(gt, gt)
        assert (r.mota, r.idf1, r.id_switches) == (1.0, 1.0, 0)

    @settings(max_examples=30)
    @given(st.permutations(list(range(1, 6))), st.integers(0, 2**31))
    def test_relabel_invariance(self, perm, seed):
        rng = np.random.default_rng(seed)
        gt = [rec(t, i, 15.0 * i, 10.0 * t) for t in range(1, 8) for i in range(1, 6)]
        pred = [TrackRecord(r.frame, int(rng.integers(1, 6)), r.box.translate(rng.normal(), 0), 1.0)
                for r in gt if rng.random() < 0.85]
        mapping = dict(zip(range(1, 6), perm))
        relabeled = [TrackRecord(r.frame, mapping[r.track_id], r.box, 1.0) for r in pred]
        assert evaluate(gt, pred).as_dict() == evaluate(gt, relabeled).as_dict()

    @settings(max_examples=30)
    @given(st.integers(0, 2**31))
    def test_idf1_recall_bound(self, seed):
        rng = np.random.default_rng(seed)
        gt = [rec(t, i, 15.0 * i, 10.0 * t) for t in range(1, 8) for i in range(1, 5)]
        pred = [TrackRecord(r.frame, int(rng.integers(1, 5)), r.box.translate(rng.normal(0, 2), 0), 1.0)
                for r in gt if rng.random() < 0.8]
        if not pred:
            return
        corr = correspondences(gt, pred)
        recall = sum(len(c.matches) for c in corr) / len(gt)
        assert evaluate(gt, pred).idf1 <= 2 * recall / (1 + recall) + 1e-12


def test_combine_pools_counts():
    gt = two_lanes()
    pred = gt[:-1]
    a, b = evaluate(gt, gt), evaluate(gt, pred)
    c = combine({"a": a, "b": b})
    assert c.n_gt == 40 and c.false_negatives == 1
    assert c.mota == pytest.approx(1 - 1 / 40)
    assert "b.false_negatives=1" in c.to_keyvalue()
