"""Greedy left-to-right association of segment relations into video-level relations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BoxedTrack, viou
from .relations import RelationInstance
from .segments import Segment


def merge_tracks(a: BoxedTrack, b: BoxedTrack) -> BoxedTrack:
    """Union of two temporally overlapping or adjacent tracks; shared frames are averaged."""
    lo = min(a.start_frame, b.start_frame)
    hi = max(a.end_frame, b.end_frame)
    if max(a.start_frame, b.start_frame) > min(a.end_frame, b.end_frame):
        raise ValueError(f"tracks {a.span} and {b.span} leave a hole")
    n = hi - lo
    boxes = np.zeros((n, 4))
    scores = np.zeros(n)
    interp = np.ones(n, dtype=bool)
    count = np.zeros(n)
    for t in (a, b):
        sl = slice(t.start_frame - lo, t.end_frame - lo)
        boxes[sl] += t.boxes
        scores[sl] += t.node_scores
        interp[sl] &= t.interpolated
        count[sl] += 1
    return BoxedTrack(a.category, lo, boxes / count[:, None], scores / count, interp)


def overlap_viou(a: BoxedTrack, b: BoxedTrack) -> float:
    """vIoU of the two tracks restricted to the frames both cover."""
    lo = max(a.start_frame, b.start_frame)
    hi = min(a.end_frame, b.end_frame)
    if lo >= hi:
        return 0.0
    return viou(a.clip(lo, hi), b.clip(lo, hi))


@dataclass
class _Open:
    inst: RelationInstance
    weighted_score: float
    weight: int
    rank: int


def merge_greedy(segments: Sequence[tuple[Segment, Sequence[RelationInstance]]],
                 viou_threshold: float = 0.5) -> list[RelationInstance]:
    """Merge ``(segment, instances)`` groups, ordered by segment start.

    An incoming instance joins an open video-level instance with the same
    triplet when both subject and object tracks reach ``viou_threshold`` over
    their shared frames; the candidate with the largest summed vIoU wins and
    each open instance absorbs at most one instance per segment.  Scores are
    averaged weighted by span length.  Instances that end before the current
    segment starts can no longer overlap anything and are closed.
    """
    done: list[_Open] = []
    active: list[_Open] = []
    created = 0
    for seg, seg_insts in segments:
        if not seg_insts:
            continue
        seg_begin = seg[0]
        still = []
        for o in active:
            (done if o.inst.span[1] <= seg_begin else still).append(o)
        active = still

        taken = set()
        fresh = []
        order = sorted(range(len(seg_insts)), key=lambda i: -seg_insts[i].score)
        for i in order:
            inst = seg_insts[i]
            best, best_total = None, -1.0
            for k, o in enumerate(active):
                if k in taken or o.inst.triplet != inst.triplet:
                    continue
                vs = overlap_viou(o.inst.subject, inst.subject)
                vo = overlap_viou(o.inst.object, inst.object)
                if vs >= viou_threshold and vo >= viou_threshold and vs + vo > best_total:
                    best, best_total = k, vs + vo
            if best is None:
                fresh.append(_Open(inst, inst.score * inst.duration, inst.duration, created))
                created += 1
                continue
            taken.add(best)
            o = active[best]
            o.weighted_score += inst.score * inst.duration
            o.weight += inst.duration
            span = (min(o.inst.span[0], inst.span[0]), max(o.inst.span[1], inst.span[1]))
            o.inst = RelationInstance(
                merge_tracks(o.inst.subject, inst.subject),
                inst.predicate,
                merge_tracks(o.inst.object, inst.object),
                o.weighted_score / o.weight,
                span,
            )
        active.extend(fresh)
    return [o.inst for o in sorted(done + active, key=lambda o: o.rank)]
