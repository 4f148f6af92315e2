import logging

import pytest

from maskflow.core import AssocConfig, BBox, Detection
from maskflow.errors import MissingFlowWhenPixelCuesEnabled, OutOfOrderFrame
from maskflow.synth import ZERO_NOISE, generate, scenario
from maskflow.tracker import FrameInput, Status, Tracker, run_sequence

from conftest import mask_from_pixels

SIZE = (100, 100)


def frame(t, boxes, conf=0.9, masks=None):
    dets = [Detection(t, i, BBox(*b), conf, masks[i] if masks else None)
            for i, b in enumerate(boxes)]
    return FrameInput(t, SIZE, dets)


def test_empty_first_frame():
    tr = Tracker()
    assert tr.step(frame(1, [])) == []
    assert tr.tracks == []


def test_zero_frames():
    assert run_sequence([]) == []


def test_early_tracks_emitted_immediately():
    out = run_sequence([frame(t, [(10 + t, 10, 20, 20)]) for t in range(1, 6)])
    assert [r.frame for r in out] == [1, 2, 3, 4, 5]
    assert {r.track_id for r in out} == {1}


def test_late_track_waits_for_min_hits():
    frames = [frame(t, []) for t in range(1, 5)]
    frames += [frame(t, [(10, 10, 20, 20)]) for t in range(5, 10)]
    out = run_sequence(frames, AssocConfig(min_hits=3))
    assert [r.frame for r in out] == [7, 8, 9]
    assert {r.track_id for r in out} == {1}


def test_output_box_is_detection_box():
    out = run_sequence([frame(t, [(10 + 2 * t, 10, 20, 20)], conf=0.95) for t in range(1, 4)])
    assert out[-1].box.as_tuple() == (16, 10, 20, 20)
    assert out[-1].confidence == 0.95


def test_track_removed_after_max_age():
    cfg = AssocConfig(max_age=3)
    tr = Tracker(cfg)
    tr.step(frame(1, [(10, 10, 20, 20)]))
    for t in range(2, 2 + cfg.max_age):
        tr.step(frame(t, []))
        assert len(tr.tracks) == 1
        assert tr.tracks[0].status is Status.LOST
    tr.step(frame(2 + cfg.max_age, []))
    assert tr.tracks == []


def test_ids_never_reused():
    cfg = AssocConfig(max_age=1)
    tr = Tracker(cfg)
    for fi in [frame(1, [(10, 10, 20, 20)]), frame(2, []), frame(3, []),
               frame(4, [(10, 10, 20, 20)])]:
        tr.step(fi)
    assert [t.id for t in tr.tracks] == [2]


def test_out_of_order_frame():
    tr = Tracker()
    tr.step(frame(3, []))
    with pytest.raises(OutOfOrderFrame):
        tr.step(frame(3, []))


def _masked_frames():
    m1 = mask_from_pixels(100, 100, [(x, y) for x in range(10, 20) for y in range(10, 20)])
    m2 = mask_from_pixels(100, 100, [(x, y) for x in range(11, 21) for y in range(10, 20)])
    return [FrameInput(1, SIZE, [Detection(1, 0, BBox(10, 10, 10, 10), 0.9, m1)]),
            FrameInput(2, SIZE, [Detection(2, 0, BBox(11, 10, 10, 10), 0.9, m2)])]


def test_missing_flow_strict():
    with pytest.raises(MissingFlowWhenPixelCuesEnabled):
        run_sequence(_masked_frames(), AssocConfig(strict_flow=True))


def test_missing_flow_warns_once(caplog):
    frames = _masked_frames()
    frames.append(FrameInput(3, SIZE, [Detection(3, 0, BBox(12, 10, 10, 10), 0.9,
                                                 frames[1].detections[0].mask)]))
    with caplog.at_level(logging.WARNING):
        out = run_sequence(frames, AssocConfig())
    assert len([r for r in caplog.records if r.levelno == logging.WARNING]) == 1
    assert {r.track_id for r in out} == {1}


def test_lifecycle_invariants_on_crowded_scene():
    bundle = generate(scenario("crowded_small", seed=3))
    tr = Tracker(AssocConfig())
    seen = set()
    for fi in bundle.frame_inputs():
        recs = tr.step(fi)
        ids = [r.track_id for r in recs]
        assert len(ids) == len(set(ids))
        for trk in tr.tracks:
            if trk.status is Status.ACTIVE:
                assert trk.last_obs_frame + trk.time_since_update == fi.frame
            if trk.status is Status.LOST:
                assert trk.time_since_update >= 1
            if trk.status is Status.ACTIVE:
                assert trk.hits >= tr.config.min_hits or trk.born_index <= tr.config.min_hits
        # a detection box is reported by at most one track
        boxes = [r.box.as_tuple() for r in recs]
        assert len(boxes) == len(set(boxes))
        seen |= set(ids)
    assert min(seen) == 1


def test_deterministic():
    bundle = generate(scenario("nonlinear_dance", seed=7))
    a = run_sequence(bundle.frame_inputs(), AssocConfig())
    b = run_sequence(bundle.frame_inputs(), AssocConfig())
    assert [r.to_line() for r in a] == [r.to_line() for r in b]


def test_baseline_path_ignores_cues():
    bundle = generate(scenario("crossing_pair", seed=2))
    cfg = AssocConfig.baseline()
    with_cues = run_sequence(bundle.frame_inputs(), cfg)
    without = run_sequence(bundle.frame_inputs(masks=False, flow=False, embeddings=False), cfg)
    assert [r.to_line() for r in with_cues] == [r.to_line() for r in without]


def test_full_config_uses_cues():
    bundle = generate(scenario("nonlinear_dance", seed=7))
    full = run_sequence(bundle.frame_inputs(), AssocConfig())
    base = run_sequence(bundle.frame_inputs(), AssocConfig.baseline())
    assert [r.to_line() for r in full] != [r.to_line() for r in base]


def test_pdf_path_runs_without_masks():
    bundle = generate(scenario("linear_easy", noise=ZERO_NOISE))
    out = run_sequence(bundle.frame_inputs(masks=False), AssocConfig(pdf_enabled=True))
    assert {r.track_id for r in out} == {1, 2, 3}
