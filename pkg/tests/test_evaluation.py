import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidrel.evaluation import (
    EvalReport,
    average_precision,
    evaluate,
    greedy_match,
    match_instance,
    recall_at_k,
    relation_detection_map,
    tagging_precision_at_k,
    trajectory_map,
)
from vidrel.relations import RelationInstance

from oracles import brute_average_precision
from toy import eval_fixture, rel, track


def test_match_instance_rules():
    a, b = track("dog", 0, 20), track("cat", 0, 20, x=100)
    gt = rel(a, "left_of", b, 1.0)
    assert match_instance(rel(a, "left_of", b, 0.2), gt)
    assert not match_instance(rel(a, "above", b, 0.2), gt)
    # subject IoU 30/50 = 0.6, object IoU 40/100 = 0.4
    s = track("dog", 0, 20, x=10)
    o = track("cat", 0, 20, x=100 + 30, w=70)
    bo = track("cat", 0, 20, x=100, w=70)
    gt2 = rel(a, "left_of", bo, 1.0)
    p = rel(s, "left_of", o, 1.0)
    assert not match_instance(p, gt2)
    assert match_instance(p, gt2, thr=0.4)


def test_simple_ap_cases():
    a, b = track("dog", 0, 20), track("cat", 0, 20, x=100)
    gt = {"v": [rel(a, "left_of", b, 1.0)]}
    assert relation_detection_map({"v": [rel(a, "left_of", b, 0.3)]}, gt) == 1.0
    assert relation_detection_map({"v": [rel(a, "above", b, 0.3)]}, gt) == 0.0
    assert relation_detection_map({}, gt) == 0.0
    assert recall_at_k({}, gt, 50) == 0.0


def test_ap_hit_miss_hit():
    assert average_precision([True, False, True], 2) == pytest.approx(0.8333333333333333)
    assert average_precision([True, False, True], 2) == (1 + 2 / 3) / 2


def test_fixture_goldens():
    preds, gts, ptr, gtr, exp = eval_fixture()
    report = evaluate(preds, gts, 0.5, ptr, gtr)
    for k in ("mAP", "R@50", "R@100", "tagging_P@1", "tagging_P@5", "tagging_P@10", "trajectory_mAP"):
        assert report.metrics[k] == pytest.approx(exp[k], abs=1e-15), k
    for v, row in exp["per_video"].items():
        for k, val in row.items():
            assert report.per_video[v][k] == pytest.approx(val, abs=1e-15)
    assert report.diagnostics["videos_without_gt"] == ["v3"]
    assert report.diagnostics["matched_gt"] == 5
    assert report.diagnostics["gt_relations"] == 6


def test_trajectory_examples():
    gt = {"v": [track("dog", 0, 20)]}
    assert trajectory_map({"v": [track("dog", 0, 20, score=0.01)]}, gt) == 1.0
    # IoU 0.4 on every frame
    assert trajectory_map({"v": [track("dog", 0, 20, w=70, x=30)]}, {"v": [track("dog", 0, 20, w=70)]}) == 0.0


def test_tagging_dedup_and_denominator():
    a, b = track("dog", 0, 20), track("cat", 0, 20, x=100)
    gts = {"v": [rel(a, "left_of", b, 1.0)]}
    preds = {"v": [rel(a, "left_of", b, 0.2), rel(a, "left_of", b, 0.9)]}
    # one distinct tag: denominator min(5, 1)
    assert tagging_precision_at_k(preds, gts, 5) == 1.0


def test_greedy_uniqueness():
    a, b = track("dog", 0, 20), track("cat", 0, 20, x=100)
    gts = [rel(a, "left_of", b, 1.0)]
    preds = [rel(a, "left_of", b, 0.9), rel(a, "left_of", b, 0.8)]
    assert greedy_match(preds, gts) == [0, None]


def test_report_round_trip():
    preds, gts, ptr, gtr, _ = eval_fixture()
    r = evaluate(preds, gts, 0.5, ptr, gtr)
    assert EvalReport.from_dict(r.to_dict()) == r


@st.composite
def random_case(draw):
    rng = np.random.default_rng(draw(st.integers(0, 10_000)))
    preds, gts = {}, {}
    for v in range(draw(st.integers(1, 3))):
        objs = [track(str(c), 0, 10, x=float(rng.integers(0, 4)) * 20) for c in "ab"]
        gts[f"v{v}"] = [rel(objs[rng.integers(2)], str(rng.choice(["p", "q"])), objs[rng.integers(2)], 1.0)
                        for _ in range(int(rng.integers(0, 4)))]
        preds[f"v{v}"] = [rel(objs[rng.integers(2)], str(rng.choice(["p", "q"])), objs[rng.integers(2)],
                              float(rng.uniform()))
                          for _ in range(int(rng.integers(0, 120)))]
    return preds, gts


@settings(max_examples=40, deadline=None)
@given(random_case())
def test_metric_bounds_and_recall_order(case):
    preds, gts = case
    m = evaluate(preds, gts).metrics
    assert all(0.0 <= v <= 1.0 for v in m.values())
    assert m["R@100"] >= m["R@50"]


@settings(max_examples=30, deadline=None)
@given(random_case())
def test_monotone_score_transform_invariance(case):
    preds, gts = case
    warped = {v: [RelationInstance(p.subject, p.predicate, p.object, np.exp(3 * p.score) - 7, p.span) for p in ps]
              for v, ps in preds.items()}
    assert evaluate(preds, gts).metrics == evaluate(warped, gts).metrics


@given(st.lists(st.booleans(), max_size=30), st.integers(0, 30))
def test_average_precision_matches_oracle(hits, extra):
    n_gt = sum(hits) + extra
    assert average_precision(hits, n_gt) == pytest.approx(brute_average_precision(hits, n_gt))
