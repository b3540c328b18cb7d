import numpy as np
import pytest
from hypothesis import given, strategies as st

from vidrel.geometry import BBox, BoxedTrack, Detection
from vidrel.segments import Segment, TrajectoryPair, enumerate_pairs, pair_eligible, split_segments, track_segment
from vidrel.tracking import LinkConfig, track_frames


def still_track(start, end, cat="dog", x=0.0):
    return BoxedTrack(cat, start, np.tile([x, 0.0, 10.0, 10.0], (end - start, 1)))


def moving(n, missing=(), cat="dog", x0=10.0, y=10.0):
    return [[] if t in missing else [Detection(t, cat, 0.9, BBox(x0 + 2 * t, y, 20, 20))] for t in range(n)]


@pytest.mark.parametrize("T, expected", [
    (32, [(0, 32)]),
    (20, [(0, 20)]),
    (1, [(0, 1)]),
    (48, [(0, 32), (16, 48)]),
    (100, [(0, 32), (16, 48), (32, 64), (48, 80), (64, 96), (68, 100)]),
])
def test_split_segments_examples(T, expected):
    assert split_segments(T) == [Segment(*e) for e in expected]


def test_split_segments_rejects_empty_video():
    with pytest.raises(ValueError):
        split_segments(0)


@given(st.integers(1, 400))
def test_segments_cover_every_frame(T):
    segs = split_segments(T)
    covered = np.zeros(T, dtype=int)
    for s in segs:
        covered[s.begin:s.end] += 1
        if T >= 32:
            assert len(s) == 32
        assert s.begin % 16 == 0 or s == segs[-1]
    assert covered.min() >= 1
    for a, b in zip(segs[:-2], segs[1:-1]):
        assert a.end - b.begin == 16


def test_track_segment_full_presence():
    tracks = track_segment(moving(64), Segment(16, 48))
    assert len(tracks) == 1
    assert tracks[0].span == (16, 48)


def test_track_segment_object_absent():
    frames = moving(20) + [[] for _ in range(44)]
    assert track_segment(frames, Segment(32, 64)) == []


def test_track_segment_bridges_dropout():
    tracks = track_segment(moving(64, missing={40, 41, 42}), Segment(32, 64))
    assert len(tracks) == 1
    assert tracks[0].span == (32, 64)
    assert tracks[0].interpolated.sum() == 3


def test_track_segment_matches_clipped_tracker():
    rng = np.random.default_rng(3)
    for trial in range(20):
        frames = []
        for t in range(80):
            dets = []
            for k in range(3):
                if rng.uniform() > 0.2:
                    dets.append(Detection(t, "ab"[k % 2], float(rng.uniform(0.1, 1)),
                                          BBox(20 + 60 * k + t + rng.normal(), 30 + rng.normal(), 25, 25)))
            frames.append(dets)
        seg = Segment(16, 48)
        expected = track_frames(frames[16:48], LinkConfig(), start_frame=16)
        assert track_segment(frames, seg, LinkConfig()) == expected


def test_enumerate_pairs_counts():
    seg = Segment(0, 32)
    two = [still_track(0, 32, x=0), still_track(0, 32, x=50)]
    three = two + [still_track(4, 30, x=100)]
    assert len(enumerate_pairs(two, seg)) == 2
    pairs = enumerate_pairs(three, seg)
    assert [(three.index(p.subject), three.index(p.object)) for p in pairs] == [
        (0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]


def test_short_trajectory_excluded():
    seg = Segment(0, 32)
    trajs = [still_track(0, 32), still_track(0, 32, x=40), still_track(0, 6, x=80)]
    pairs = enumerate_pairs(trajs, seg)
    assert len(pairs) == 2
    assert all(trajs[2] is not p.subject and trajs[2] is not p.object for p in pairs)


def test_overlap_gate():
    seg = Segment(0, 32)
    a = still_track(0, 20)
    assert pair_eligible(a, still_track(12, 32, x=40), seg)      # 8 shared frames
    assert not pair_eligible(a, still_track(13, 32, x=40), seg)  # 7 shared frames
    assert pair_eligible(a, still_track(13, 32, x=40), seg, require_middle=False, min_overlap=7)


def test_short_video_overlap_gate_shrinks():
    seg = Segment(0, 5)
    assert pair_eligible(still_track(0, 5), still_track(0, 5, x=30), seg)


def test_pair_span_is_clipped_to_segment():
    pair = TrajectoryPair(still_track(0, 40), still_track(10, 60, x=30), Segment(16, 48))
    assert pair.span == (16, 40)


@given(st.lists(st.tuples(st.integers(0, 31), st.integers(1, 32)), max_size=6))
def test_pairs_distinct_and_bounded(raw):
    seg = Segment(0, 32)
    trajs = [still_track(s, min(32, s + n), x=15.0 * i) for i, (s, n) in enumerate(raw)]
    pairs = enumerate_pairs(trajs, seg)
    n = len(trajs)
    assert len(pairs) <= n * (n - 1)
    assert all(p.subject is not p.object for p in pairs)
