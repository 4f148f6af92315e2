import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maskflow.association import (CostMatrix, associate_stage1, associate_stage2,
                                  associate_stage3, fuse_costs, hungarian, remap)
from maskflow.core import AssocConfig


def brute_force_min(cost):
    cost = np.asarray(cost)
    r, c = cost.shape
    if r <= c:
        return min(sum(cost[i, p[i]] for i in range(r))
                   for p in itertools.permutations(range(c), r))
    return brute_force_min(cost.T)


def total(cost, pairs):
    return sum(cost[r][c] for r, c in pairs)


class TestHungarian:
    def test_identity(self):
        assert hungarian([[0, 1], [1, 0]]) == [(0, 0), (1, 1)]

    def test_anti_diagonal(self):
        pairs = hungarian([[1, 2], [2, 4]])
        assert pairs == [(0, 1), (1, 0)]
        assert total([[1, 2], [2, 4]], pairs) == 4

    def test_empty(self):
        assert hungarian(np.zeros((0, 3))) == []

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            hungarian([[np.inf, 0.0]])

    @settings(max_examples=150)
    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_matches_brute_force(self, r, c, data):
        vals = data.draw(st.lists(st.integers(-20, 20), min_size=r * c, max_size=r * c))
        cost = np.array(vals, float).reshape(r, c)
        pairs = hungarian(cost)
        assert len(pairs) == min(r, c)
        assert len({p[0] for p in pairs}) == len({p[1] for p in pairs}) == len(pairs)
        assert total(cost, pairs) == brute_force_min(cost)

    def test_positive_scaling_keeps_assignment(self, rng):
        for _ in range(50):
            cost = rng.normal(size=(5, 4))
            assert hungarian(cost) == hungarian(cost * rng.uniform(0.1, 10))


class TestFusion:
    def test_degenerate_weights(self, rng):
        iou = rng.uniform(size=(3, 4))
        ocm = rng.uniform(size=(3, 4))
        cfg = AssocConfig(lambda_p=0.0, lambda_c=0.0, lambda_appr=0.0)
        layers = CostMatrix(iou, ocm=ocm, pmm=-rng.uniform(size=(3, 4)),
                            cdm=-rng.uniform(size=(3, 4)), appearance=rng.uniform(size=(3, 4)))
        for stage in (1, 2):
            assert np.allclose(fuse_costs(layers, cfg, stage), -iou + cfg.lambda_ocm * ocm)

    def test_default_weights_by_hand(self):
        cfg = AssocConfig()
        layers = CostMatrix([[0.8, 0.1], [0.0, 0.6]], ocm=[[0.0, 0.5], [1.0, 0.25]],
                            pmm=[[-0.9, 0.0], [0.0, -0.5]], cdm=[[-1.0, -0.2], [-0.1, -1.0]],
                            appearance=[[0.1, 0.9], [1.0, 0.2]])
        s1 = fuse_costs(layers, cfg, 1)
        # -iou + 0.2*ocm + 0.2*pmm + 1.0*app
        assert s1[0, 0] == pytest.approx(-0.8 + 0.0 - 0.18 + 0.1)
        assert s1[1, 1] == pytest.approx(-0.6 + 0.05 - 0.1 + 0.2)
        s2 = fuse_costs(layers, cfg, 2)
        # -iou + 0.2*ocm + 1.0*cdm
        assert s2[0, 1] == pytest.approx(-0.1 + 0.1 - 0.2)
        assert s2[1, 0] == pytest.approx(0.0 + 0.2 - 0.1)

    def test_dbc_row_shift(self):
        cfg = AssocConfig()
        base = CostMatrix([[0.4]], flow_iou=[[0.9]], dbc_triggered=[False])
        trig = CostMatrix([[0.4]], flow_iou=[[0.9]], dbc_triggered=[True])
        diff = fuse_costs(base, cfg, 1) - fuse_costs(trig, cfg, 1)
        assert diff[0, 0] == pytest.approx(cfg.lambda_ilm * 0.5)

    def test_layer_shapes_checked(self):
        with pytest.raises(ValueError):
            CostMatrix(np.zeros((2, 2)), pmm=np.zeros((2, 3)))


class TestStages:
    def test_perfect_overlap(self):
        r = associate_stage1(CostMatrix([[1.0]]), AssocConfig())
        assert r.matches == [(0, 0)]

    def test_no_detections(self):
        r = associate_stage1(CostMatrix(np.zeros((2, 0))), AssocConfig())
        assert r.matches == [] and r.unmatched_tracks == [0, 1]

    def test_pmm_breaks_iou_tie(self):
        layers = CostMatrix(np.full((2, 2), 0.5), pmm=[[0.0, -1.0], [-1.0, 0.0]])
        assert associate_stage1(layers, AssocConfig()).matches == [(0, 1), (1, 0)]
        assert associate_stage1(layers, AssocConfig(pmm_enabled=False)).matches == [(0, 0), (1, 1)]

    def test_pmm_gate_admits_low_iou(self):
        layers = CostMatrix([[0.0]], pmm=[[-0.8]])
        assert associate_stage1(layers, AssocConfig()).matches == [(0, 0)]
        assert associate_stage1(layers, AssocConfig.baseline()).matches == []

    def test_gate_rejects_low_iou(self):
        r = associate_stage1(CostMatrix([[0.05]]), AssocConfig())
        assert r.matches == [] and r.unmatched_dets == [0]

    def test_stage2_without_centroid_is_pure_iou(self, rng):
        iou = rng.uniform(0.1, 1, size=(4, 4))
        cdm = -rng.uniform(size=(4, 4))
        cfg = AssocConfig(lambda_c=0.0)
        a = associate_stage2(CostMatrix(iou, cdm=cdm), cfg)
        assert a.matches == hungarian(-iou)

    def test_stage2_centroid_breaks_tie(self):
        for order in ([-1.0, -0.1], [-0.1, -1.0]):
            layers = CostMatrix([[0.2, 0.2]], cdm=[order])
            r = associate_stage2(layers, AssocConfig())
            assert r.matches == [(0, int(np.argmin(order)))]

    def test_stage2_pass_through(self):
        r = associate_stage2(CostMatrix(np.zeros((3, 0))), AssocConfig())
        assert r.unmatched_tracks == [0, 1, 2]

    def test_stage3_recovers_overlap(self):
        r = associate_stage3([[0.0, 0.7]], AssocConfig())
        assert r.matches == [(0, 1)]

    def test_stage3_threshold_strict(self):
        assert associate_stage3([[0.3]], AssocConfig()).matches == []
        assert associate_stage3(np.zeros((2, 2)), AssocConfig()).matches == []

    def test_remap(self):
        r = associate_stage3([[0.0, 0.7]], AssocConfig())
        m = remap(r, [5], [10, 11])
        assert m.matches == [(5, 11)] and m.unmatched_dets == [10]

    @settings(max_examples=60)
    @given(st.integers(0, 5), st.integers(0, 5), st.data())
    def test_partition_of_indices(self, r, c, data):
        vals = data.draw(st.lists(st.floats(0, 1), min_size=r * c, max_size=r * c))
        iou = np.array(vals).reshape(r, c)
        for res in (associate_stage1(CostMatrix(iou), AssocConfig()),
                    associate_stage2(CostMatrix(iou), AssocConfig()),
                    associate_stage3(iou, AssocConfig())):
            rows = [m[0] for m in res.matches] + res.unmatched_tracks
            cols = [m[1] for m in res.matches] + res.unmatched_dets
            assert sorted(rows) == list(range(r))
            assert sorted(cols) == list(range(c))

    @settings(max_examples=60)
    @given(st.integers(1, 5), st.integers(1, 5), st.data())
    def test_baseline_ignores_pixel_and_appearance_layers(self, r, c, data):
        def grid(lo, hi):
            v = data.draw(st.lists(st.floats(lo, hi), min_size=r * c, max_size=r * c))
            return np.array(v).reshape(r, c)

        iou, ocm = grid(0, 1), grid(0, 1)
        cfg = AssocConfig.baseline()
        bare = CostMatrix(iou, ocm=ocm)
        full = CostMatrix(iou, ocm=ocm, flow_iou=grid(0, 1), dbc_triggered=np.ones(r, bool),
                          pmm=grid(-1, 0), cdm=grid(-1, 0), appearance=grid(0, 2))
        assert associate_stage1(bare, cfg) == associate_stage1(full, cfg)
        assert associate_stage2(bare, cfg) == associate_stage2(full, cfg)
