"""Overlapped fixed-length segments, per-segment tracking and pair enumeration."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .geometry import BoxedTrack, Detection, temporal_overlap
from .tracking import LinkConfig, track_frames

SEGMENT_LENGTH = 32
SEGMENT_STRIDE = 16


class Segment(NamedTuple):
    begin: int
    end: int

    def __len__(self) -> int:
        return self.end - self.begin

    @property
    def middle(self) -> int:
        return self.begin + (self.end - self.begin) // 2


@dataclass
class TrajectoryPair:
    subject: BoxedTrack
    object: BoxedTrack
    segment: Segment

    @property
    def span(self) -> tuple[int, int]:
        """Frames where both trajectories exist, restricted to the segment."""
        lo = max(self.subject.start_frame, self.object.start_frame, self.segment.begin)
        hi = min(self.subject.end_frame, self.object.end_frame, self.segment.end)
        return (lo, max(lo, hi))


def split_segments(frame_count: int, length: int = SEGMENT_LENGTH,
                   stride: int = SEGMENT_STRIDE) -> list[Segment]:
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    if frame_count <= length:
        return [Segment(0, frame_count)]
    segs = [Segment(b, b + length) for b in range(0, frame_count - length + 1, stride)]
    if segs[-1].end != frame_count:
        segs.append(Segment(frame_count - length, frame_count))
    return segs


def track_segment(frames: Sequence[Sequence[Detection]], seg: Segment,
                  cfg: LinkConfig = None) -> list[BoxedTrack]:
    """Run the tracker on the detections of ``[seg.begin, seg.end)`` only.

    ``frames`` is indexed by absolute frame number; returned tracks keep
    absolute frame numbers.
    """
    clipped = [list(frames[t]) if t < len(frames) else [] for t in range(seg.begin, seg.end)]
    return track_frames(clipped, cfg, start_frame=seg.begin)


def pair_eligible(a: BoxedTrack, b: BoxedTrack, seg: Segment, min_overlap: int = 8,
                  require_middle: bool = True) -> bool:
    if require_middle and not (a.covers(seg.middle) and b.covers(seg.middle)):
        return False
    a_in = (max(a.start_frame, seg.begin), min(a.end_frame, seg.end))
    b_in = (max(b.start_frame, seg.begin), min(b.end_frame, seg.end))
    return temporal_overlap(a_in, b_in) >= min(min_overlap, len(seg))


def enumerate_pairs(trajs: Sequence[BoxedTrack], seg: Segment, min_overlap: int = 8,
                    require_middle: bool = True) -> list[TrajectoryPair]:
    """Ordered (subject, object) pairs of distinct trajectories that co-occur in ``seg``."""
    pairs = []
    for i, s in enumerate(trajs):
        for j, o in enumerate(trajs):
            if i != j and pair_eligible(s, o, seg, min_overlap, require_middle):
                pairs.append(TrajectoryPair(s, o, seg))
    return pairs
