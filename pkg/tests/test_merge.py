import numpy as np
import pytest

from vidrel.merge import merge_greedy, merge_tracks, overlap_viou
from vidrel.segments import Segment

from toy import rel, segment_chain, track


def test_two_segments_merge_into_one():
    (s1, [a]), (s2, [b]) = segment_chain(2)[0]
    out = merge_greedy([(s1, [a]), (s2, [b])])
    assert len(out) == 1
    assert out[0].span == (0, 48)
    assert out[0].subject.span == (0, 48)
    assert out[0].score == pytest.approx((0.5 * 32 + 0.6 * 32) / 64)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_chain_collapses(k):
    groups, span = segment_chain(k)
    out = merge_greedy(groups)
    assert len(out) == 1
    assert out[0].span == span
    assert out[0].object.span == span
    scores = [g[1][0].score for g in groups]
    assert min(scores) <= out[0].score <= max(scores)


def test_merged_boxes_match_source_on_exact_overlap():
    groups, span = segment_chain(3)
    out = merge_greedy(groups)[0]
    for seg, [inst] in groups:
        np.testing.assert_allclose(out.subject.clip(*seg).boxes, inst.subject.boxes)


def test_different_predicate_not_merged():
    (s1, [a]), _ = segment_chain(2)[0]
    _, (s2, [b]) = segment_chain(2, pred="above")[0]
    assert len(merge_greedy([(s1, [a]), (s2, [b])])) == 2


def test_low_overlap_viou_not_merged():
    # shared frames: boxes offset so that per-frame IoU is 0.3
    s1, s2 = Segment(0, 32), Segment(16, 48)
    a = rel(track("dog", 0, 32), "left_of", track("cat", 0, 32, x=200), 0.5)
    # width 40, shift d: (40-d)/(40+d) = 0.3 -> d = 28/1.3
    d = 28 / 1.3
    b = rel(track("dog", 16, 48, x=d), "left_of", track("cat", 16, 48, x=200), 0.5)
    assert overlap_viou(a.subject, b.subject) == pytest.approx(0.3)
    assert len(merge_greedy([(s1, [a]), (s2, [b])])) == 2


def test_best_candidate_and_single_absorption():
    s1, s2 = Segment(0, 32), Segment(16, 48)
    near = rel(track("dog", 0, 32, x=0), "left_of", track("cat", 0, 32, x=200), 0.5)
    off = rel(track("dog", 0, 32, x=5), "left_of", track("cat", 0, 32, x=200), 0.5)
    inc1 = rel(track("dog", 16, 48, x=0), "left_of", track("cat", 16, 48, x=200), 0.9)
    inc2 = rel(track("dog", 16, 48, x=1), "left_of", track("cat", 16, 48, x=200), 0.8)
    out = merge_greedy([(s1, [near, off]), (s2, [inc1, inc2])])
    assert len(out) == 2
    # the higher-scored incoming instance picks the exact match first
    assert out[0].subject.boxes[0][0] == 0.0 and out[0].span == (0, 48)
    assert out[1].span == (0, 48)


def test_closed_instances_do_not_merge():
    a = rel(track("dog", 0, 16), "left_of", track("cat", 0, 16, x=100), 0.5)
    b = rel(track("dog", 16, 32), "left_of", track("cat", 16, 32, x=100), 0.5)
    out = merge_greedy([(Segment(0, 16), [a]), (Segment(16, 32), [b])])
    assert len(out) == 2


def test_every_input_contributes_once():
    rng = np.random.default_rng(4)
    groups = []
    n_in = 0
    for i in range(6):
        seg = Segment(16 * i, 16 * i + 32)
        insts = [rel(track("dog", *seg, x=float(rng.integers(0, 3)) * 30), str(rng.choice(["a", "b"])),
                     track("cat", *seg, x=300), float(rng.uniform())) for _ in range(int(rng.integers(0, 4)))]
        n_in += len(insts)
        groups.append((seg, insts))
    out = merge_greedy(groups)
    assert len(out) <= n_in
    assert sum(o.duration for o in out) >= 32


def test_merge_tracks_rejects_hole():
    with pytest.raises(ValueError):
        merge_tracks(track("dog", 0, 10), track("dog", 12, 20))
    m = merge_tracks(track("dog", 0, 10), track("dog", 10, 20))
    assert m.span == (0, 20)
