import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icon2.data_model import BBox, DetectionInstance, GroundTruthInstance
from icon2.errors import UndefinedAPError
from icon2.matching import (
    FP,
    IGNORED,
    TP,
    InsufficientDataError,
    MatchConfig,
    attach_bootstrap,
    attribute_ap_sweep,
    average_precision,
    bootstrap_ci,
    evaluate_cell,
    group_ap,
    iou,
    match_detections,
    normalized_precision,
    pr_curve,
)
from icon2.synth import ScenarioSpec, generate_scenario

from oracles import envelope_ap, exact_iou, reference_match
from scenes import SIZE, TIME, build, det_dicts, gt_dicts, random_scene


def gt(k, xyxy, image=1, cls=1):
    return GroundTruthInstance(k, image, cls, BBox(*xyxy))


def det(xyxy, conf, image=1, cls=1, index=0):
    return DetectionInstance(image, cls, BBox(*xyxy), conf, index)


# -- IoU -----------------------------------------------------------------------


def test_iou_examples():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(20, 20, 30, 30)) == 0.0
    assert iou(a, BBox(10, 0, 20, 10)) == 0.0
    assert iou(a, BBox(5, 0, 15, 10)) == pytest.approx(50 / 150)


boxes = st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 30), st.integers(1, 30)).map(
    lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3]))


@given(boxes, boxes)
def test_iou_symmetric_bounded_and_exact(a, b):
    v = iou(BBox(*a), BBox(*b))
    assert v == iou(BBox(*b), BBox(*a))
    assert 0.0 <= v <= 1.0
    assert v == float(exact_iou(a, b))


# -- matching ---------------------------------------------------------------------


def _labels(gts, dets, mask=None, thr=0.5):
    res = match_detections(gts, dets, mask, MatchConfig(iou_threshold=thr))
    return [(d.confidence, lab) for d, lab in zip(res.detections, res.labels)], res


def test_single_match_tp():
    assert iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 6)) == pytest.approx(0.6)
    labels, res = _labels([gt(1, (0, 0, 10, 10))], [det((0, 0, 10, 6), 0.9)])
    assert labels == [(0.9, TP)] and res.num_positives == 1


def test_low_iou_is_fp():
    labels, res = _labels([gt(1, (0, 0, 10, 10))], [det((0, 0, 10, 4), 0.9)])
    assert labels == [(0.9, FP)]
    assert res.matched_gt == (None,)


def test_greedy_higher_confidence_wins():
    labels, _ = _labels([gt(1, (0, 0, 10, 10))], [det((0, 0, 10, 9), 0.8, index=0),
                                                  det((0, 0, 10, 10), 0.9, index=1)])
    assert labels == [(0.9, TP), (0.8, FP)]


def test_ignored_gt_absorbs_detection():
    labels, res = _labels([gt(1, (0, 0, 10, 10))], [det((0, 0, 10, 7), 0.9)], mask=[True])
    assert labels == [(0.9, IGNORED)]
    assert res.num_positives == 0


def test_non_ignored_gt_preferred_over_better_ignored():
    gts = [gt(1, (0, 0, 10, 10)), gt(2, (1, 0, 11, 10))]
    _, res = _labels(gts, [det((0, 0, 10, 10), 0.9)], mask=[True, False])
    assert res.labels == (TP,) and res.matched_gt == (2,)


def test_detections_in_other_image_do_not_match():
    labels, _ = _labels([gt(1, (0, 0, 10, 10), image=1)], [det((0, 0, 10, 10), 0.9, image=2)])
    assert labels == [(0.9, FP)]


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_matching_agrees_with_reference(seed):
    rng = np.random.default_rng(seed)
    ds = random_scene(rng)
    ids = [g.gt_id for g in ds.ground_truth if g.class_id == 1]
    ignored = {i for i in ids if rng.random() < 0.3}
    thr = float(rng.choice([0.3, 0.5, 0.75]))
    gts = ds.gts_of_class(1)
    dets = [d for d in ds.detections if d.class_id == 1]
    res = match_detections(gts, dets, [g.gt_id in ignored for g in gts], MatchConfig(iou_threshold=thr))
    ref = reference_match(gt_dicts(ds, 1, ignored), det_dicts(ds, 1), thr)
    assert [lab for lab in res.labels] == [lab for _, lab, _ in ref]
    assert list(res.matched_gt) == [g for _, _, g in ref]
    # invariants: one detection per gt, TP <= N_i
    matched = [g for g, lab in zip(res.matched_gt, res.labels) if lab == TP]
    assert len(matched) == len(set(matched))
    assert res.tp_count <= res.num_positives == len(ids) - len(ignored)


# -- PR curve and precision ----------------------------------------------------------


def _curve(seq, n_pos, confs=None):
    """Curve from a label sequence in descending confidence."""
    confs = confs or [1.0 - 0.1 * k for k in range(len(seq))]
    gts = [gt(k, (100 * k, 0, 100 * k + 10, 10)) for k in range(n_pos)]
    dets, used = [], 0
    for k, (lab, c) in enumerate(zip(seq, confs)):
        if lab == TP:
            dets.append(det((100 * used, 0, 100 * used + 10, 10), c, index=k))
            used += 1
        else:
            dets.append(det((5000, 5000, 5010, 5010), c, index=k))
    return pr_curve(match_detections(gts, dets))


def test_recall_points_tp_fp_tp():
    c = _curve([TP, FP, TP], 2)
    assert c.recall.tolist() == [0.5, 0.5, 1.0]


def test_all_fp_recall_zero():
    c = _curve([FP, FP], 3)
    assert c.recall.tolist() == [0.0, 0.0]


def test_no_detections_empty_curve():
    c = _curve([], 2)
    assert c.empty
    with pytest.raises(UndefinedAPError):
        average_precision(c)


def test_tied_confidences_enter_together():
    c = _curve([TP, FP, TP], 2, confs=[0.9, 0.5, 0.5])
    assert c.recall.tolist() == [0.5, 1.0]
    assert c.fp.tolist() == [0, 1]


def test_normalized_precision_examples():
    assert normalized_precision(0.5, 20, 5) == pytest.approx(10 / 15)
    assert normalized_precision(0.3, 7, 0) == 1.0
    # n_bar = N_i: R*N = TP, so this is TP/(TP+FP)
    assert normalized_precision(3 / 8, 8, 5) == pytest.approx(3 / 8)


def test_ap_tp_fp_tp():
    assert average_precision(_curve([TP, FP, TP], 2)) == pytest.approx(0.5 * 1.0 + 0.5 * (2 / 3))
    assert float(envelope_ap([(0.9, True), (0.8, False), (0.7, True)], 2)) == pytest.approx(5 / 6)


def test_ap_perfect_detector():
    assert average_precision(_curve([TP, TP, TP], 3)) == 1.0
    assert average_precision(_curve([TP, TP, TP], 3), cfg=MatchConfig(interpolation="101")) == 1.0


def test_ap_missed_positives():
    # half the gts never found: AP is capped by recall
    assert average_precision(_curve([TP, TP], 4)) == 0.5


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.booleans()), min_size=1, max_size=14),
       st.integers(0, 5), st.sampled_from(["all-points", "101-point"]))
def test_ap_matches_envelope_oracle(scored, extra_pos, interp):
    n_tp = sum(hit for _, hit in scored)
    n_pos = n_tp + extra_pos
    if n_pos == 0:
        return
    confs = [s / 6 for s, _ in scored]
    order = sorted(range(len(scored)), key=lambda k: -confs[k])
    c = _curve([TP if scored[k][1] else FP for k in order], n_pos, [confs[k] for k in order])
    got = average_precision(c, cfg=MatchConfig(interpolation=interp))
    want = envelope_ap([(confs[k], scored[k][1]) for k in order], n_pos, interpolation=interp)
    assert abs(got - float(want)) <= 1e-12
    assert 0.0 <= got <= 1.0


# -- cells, groups and sweeps -----------------------------------------------------


def _toy_size():
    """Three images; image 1 has a small and a large car, image 2 a large
    car, image 3 a small car with an off-box FP."""
    return build(
        [1, 2, 3],
        [(1, 1, 1, (0, 0, 10, 10), {"size": "small"}),
         (2, 1, 1, (40, 40, 90, 90), {"size": "large"}),
         (3, 2, 1, (10, 10, 60, 60), {"size": "large"}),
         (4, 3, 1, (5, 5, 15, 15), {"size": "small"})],
        [(1, 1, (0, 0, 10, 10), 0.9), (1, 1, (40, 40, 90, 88), 0.8),
         (2, 1, (10, 10, 60, 58), 0.7), (3, 1, (5, 5, 14, 15), 0.4),
         (3, 1, (70, 70, 80, 80), 0.6)],
        (SIZE,),
    )


def test_group_ap_perfect_single_image():
    ds = build([(1, {"time": "day"})], [(1, 1, 1, (0, 0, 10, 10))],
               [(1, 1, (0, 0, 10, 10), 0.9)], (TIME,))
    r = group_ap(ds, 1, "time", "day", MatchConfig(min_support=1))
    assert r.ap == 1.0 and r.n_i == 1 and r.reliable


def test_group_ap_absent_value():
    ds = build([(1, {"time": "day"})], [(1, 1, 1, (0, 0, 10, 10))], [(1, 1, (0, 0, 10, 10), 0.9)], (TIME,))
    with pytest.raises(UndefinedAPError):
        group_ap(ds, 1, "time", "night")


def test_group_ap_small_matches_filtering_oracle():
    ds = _toy_size()
    r = group_ap(ds, 1, "size", "small")
    # small gts 1 and 4; large gts 2, 3 are ignored and absorb the 0.8 and
    # 0.7 detections; remaining order is TP(0.9), FP(0.6), TP(0.4)
    assert r.n_i == 2
    assert r.ap == pytest.approx(5 / 6)
    assert not r.reliable


def test_sweep_shares_mean_positive_count():
    gts = [(k, 1, 1, (0, 0, 10, 10), {"size": "small"}) for k in range(10)]
    gts += [(100 + k, 2, 1, (0, 0, 10, 10), {"size": "large"}) for k in range(30)]
    ds = build([1, 2], gts, [(1, 1, (0, 0, 10, 10), 0.9), (2, 1, (0, 0, 10, 10), 0.9)], (SIZE,))
    res = attribute_ap_sweep(ds, 1, "size")
    assert [r.n_bar for r in res] == [20.0, 20.0]
    assert [r.n_i for r in res] == [10, 30]


def test_sweep_equal_counts_is_plain_ap():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 50:
        ds = random_scene(rng, max_images=5)
        cells = {v: evaluate_cell(ds, 1, [("income", v)]) for v in ("low", "high")}
        if cells["low"].n_i != cells["high"].n_i or cells["low"].n_i == 0:
            continue
        try:
            res = attribute_ap_sweep(ds, 1, "income")
        except UndefinedAPError:
            continue
        for r in res:
            if r.defined:
                assert r.ap == average_precision(cells[r.value].curve())
        checked += 1


def test_sweep_undefined_value_reported():
    ds = build([(1, {"time": "day"}), (2, {"time": "night"})],
               [(1, 1, 1, (0, 0, 10, 10)), (2, 2, 1, (0, 0, 10, 10))],
               [(1, 1, (0, 0, 10, 10), 0.9)], (TIME,))
    res = attribute_ap_sweep(ds, 1, "time")
    assert res[0].ap == 1.0
    assert res[1].status == "undefined" and res[1].ap is None and res[1].n_i == 1


def _skewed_scenario(seed, n_images=300, low_share=10 / 11):
    spec = ScenarioSpec(num_images=n_images, sensitive_marginals={"low": low_share, "high": 1 - low_share},
                        detect_prob=0.7, clutter_fp_rate=3.0, jitter_px=1.0, seed=seed)
    return generate_scenario(spec)


def test_normalization_direction_with_ten_fold_positives():
    ds = _skewed_scenario(11)
    res = {r.value: r for r in attribute_ap_sweep(ds, 1, "income")}
    big, small = sorted(res.values(), key=lambda r: -r.n_i)
    assert big.n_i > 5 * small.n_i
    plain = {v: average_precision(evaluate_cell(ds, 1, [("income", v)]).curve()) for v in res}
    # the larger group is normalized with fewer positives than it has, so its
    # precision (hence AP) drops; the smaller group's rises
    assert big.ap < plain[big.value]
    assert small.ap > plain[small.value]


# -- bootstrap -----------------------------------------------------------------


def _identical_images(n):
    gts = [(k, k, 1, (0, 0, 10, 10), {}) for k in range(n)]
    dets = [(k, 1, (0, 0, 10, 10), 0.9) for k in range(n)] + [(k, 1, (50, 50, 60, 60), 0.5) for k in range(n)]
    return build([(k, {"time": "day"}) for k in range(n)], gts, dets, (TIME,))


def test_bootstrap_zero_width_when_images_identical():
    lo, hi = bootstrap_ci(_identical_images(12), 1, "time", "day", replicates=100)
    assert lo == hi == 1.0


def test_bootstrap_refuses_tiny_cells():
    with pytest.raises(InsufficientDataError):
        bootstrap_ci(_identical_images(5), 1, "time", "day", replicates=100)


def test_bootstrap_rejects_few_replicates():
    with pytest.raises(ValueError):
        bootstrap_ci(_identical_images(12), 1, "time", "day", replicates=50)


def test_bootstrap_deterministic_and_contains_point():
    ds = _skewed_scenario(5, n_images=120, low_share=0.5)
    a = bootstrap_ci(ds, 1, "income", "low", replicates=150, seed=9)
    b = bootstrap_ci(_skewed_scenario(5, n_images=120, low_share=0.5), 1, "income", "low", replicates=150, seed=9)
    assert a == b
    point = next(r.ap for r in attribute_ap_sweep(ds, 1, "income") if r.value == "low")
    assert a[0] <= point <= a[1]
    # replicate r uses seed + r, so only seeds at least `replicates` apart draw disjoint streams
    assert a != bootstrap_ci(ds, 1, "income", "low", replicates=150, seed=9 + 150)


def test_bootstrap_width_shrinks_with_four_times_the_images():
    widths = {50: [], 200: []}
    for trial in range(20):
        for n in widths:
            ds = _skewed_scenario(1000 + trial, n_images=n, low_share=0.5)
            lo, hi = bootstrap_ci(ds, 1, "income", "low", replicates=100, seed=trial)
            widths[n].append(hi - lo)
    assert np.median(widths[200]) < np.median(widths[50])


def test_attach_bootstrap_notes_refusal():
    ds = build([(k, {"time": "day" if k < 12 else "night"}) for k in range(15)],
               [(k, k, 1, (0, 0, 10, 10)) for k in range(15)],
               [(k, 1, (0, 0, 10, 10), 0.1 + k / 20) for k in range(15)], (TIME,))
    res = attribute_ap_sweep(ds, 1, "time")
    attach_bootstrap(ds, res, replicates=100)
    assert res[0].ci is not None and res[0].ci.low <= res[0].ap <= res[0].ci.high
    assert res[1].ci is None and "CI refused" in res[1].note


# -- properties ------------------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_curve_invariants(seed):
    ds = random_scene(np.random.default_rng(seed), conf_levels=None)
    for cls in (1, 2):
        c = evaluate_cell(ds, cls, []).curve()
        if c.empty:
            continue
        assert np.all(np.diff(c.recall) >= 0)
        assert np.all((0 <= c.recall) & (c.recall <= 1))
        assert np.all(np.diff(c.confidence) < 0)
        ap = average_precision(c)
        assert 0.0 <= ap <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_adding_fp_at_bottom_never_raises_ap(seed):
    rng = np.random.default_rng(seed)
    ds = random_scene(rng, conf_levels=None)
    try:
        before = average_precision(evaluate_cell(ds, 1, []).curve())
    except UndefinedAPError:
        return
    extra = DetectionInstance(0, 1, BBox(90, 90, 99, 99), 0.0, 10_000)
    after = average_precision(evaluate_cell(replace(ds, detections=ds.detections + (extra,)), 1, []).curve())
    assert after <= before + 1e-15


def test_match_config_validation():
    with pytest.raises(ValueError):
        MatchConfig(iou_threshold=0.0)
    with pytest.raises(ValueError):
        MatchConfig(iou_threshold=1.5)
    with pytest.raises(ValueError):
        MatchConfig(interpolation="11-point")
    assert MatchConfig(interpolation="101").interpolation == "101-point"
    assert math.isclose(MatchConfig(iou_threshold=1.0).iou_threshold, 1.0)


def test_fraction_oracle_sanity():
    # one FP ahead of the only TP: precision 1/2 over the whole recall range
    assert envelope_ap([(0.9, False), (0.5, True)], 1) == Fraction(1, 2)
