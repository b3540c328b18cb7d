"""Box and trajectory geometry shared by tracking, merging and evaluation.

Boxes are ``(x, y, w, h)`` with ``(x, y)`` the top-left corner.  Frame spans
are half-open: a track starting at frame ``s`` with ``n`` boxes covers
``[s, s + n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np


class BBox(NamedTuple):
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def is_valid(self) -> bool:
        vals = np.array(self, dtype=float)
        return bool(np.all(np.isfinite(vals)) and self.w > 0 and self.h > 0)


def check_bbox(box: Sequence[float]) -> BBox:
    """Coerce ``box`` to a BBox, raising ValueError when it is degenerate."""
    if len(box) != 4:
        raise ValueError(f"bbox needs 4 values, got {len(box)}")
    b = BBox(*(float(v) for v in box))
    if not b.is_valid():
        raise ValueError(f"invalid bbox {tuple(box)}: need finite values and w, h > 0")
    return b


@dataclass(frozen=True)
class Detection:
    frame_index: int
    category: str
    score: float
    bbox: BBox
    interpolated: bool = False

    def __post_init__(self):
        if self.interpolated and self.score != 0.0:
            raise ValueError("interpolated detections must carry score 0")


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    ax2, ay2 = a[0] + a[2], a[1] + a[3]
    bx2, by2 = b[0] + b[2], b[1] + b[3]
    iw = min(ax2, bx2) - max(a[0], b[0])
    ih = min(ay2, by2) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # areas from corners so that identical boxes give exactly 1.0
    area_a = (ax2 - a[0]) * (ay2 - a[1])
    area_b = (bx2 - b[0]) * (by2 - b[1])
    return inter / (area_a + area_b - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` xywh arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    return _iou_arrays(a[:, None, :], b[None, :, :])


def paired_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise IoU of two aligned ``(n, 4)`` arrays."""
    return _iou_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def _iou_arrays(a, b):
    ax1, ay1 = a[..., 0], a[..., 1]
    ax2, ay2 = ax1 + a[..., 2], ay1 + a[..., 3]
    bx1, by1 = b[..., 0], b[..., 1]
    bx2, by2 = bx1 + b[..., 2], by1 + b[..., 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def scale_ratio(a: Sequence[float], b: Sequence[float]) -> float:
    """Larger aspect ratio (h / w) over the smaller one; always >= 1.

    The branch test ``h2/w2 > h1/w1`` is evaluated cross-multiplied, which is
    the same condition for positive widths and keeps the result exactly
    symmetric in floating point.
    """
    p = b[3] * a[2]  # h2 * w1
    q = a[3] * b[2]  # h1 * w2
    if p > q:
        return p / q
    return q / p


def area_ratio(a: Sequence[float], b: Sequence[float]) -> float:
    """Larger area over smaller area; always >= 1."""
    area_a = a[2] * a[3]
    area_b = b[2] * b[3]
    if area_a > area_b:
        return area_a / area_b
    return area_b / area_a


def interpolate_box(a: Sequence[float], b: Sequence[float], alpha: float) -> BBox:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return BBox(*((1.0 - alpha) * ua + alpha * ub for ua, ub in zip(a, b)))


def union_box(a: Sequence[float], b: Sequence[float]) -> BBox:
    x1 = min(a[0], b[0])
    y1 = min(a[1], b[1])
    x2 = max(a[0] + a[2], b[0] + b[2])
    y2 = max(a[1] + a[3], b[1] + b[3])
    return BBox(x1, y1, x2 - x1, y2 - y1)


@dataclass(eq=False)
class BoxedTrack:
    """A box per consecutive frame, starting at ``start_frame``."""

    category: str
    start_frame: int
    boxes: np.ndarray
    node_scores: np.ndarray = None
    interpolated: np.ndarray = None
    score: Optional[float] = field(default=None)  # path score at extraction time

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 4)
        n = len(self.boxes)
        if n == 0:
            raise ValueError("a track needs at least one box")
        if self.node_scores is None:
            self.node_scores = np.ones(n)
        self.node_scores = np.asarray(self.node_scores, dtype=float)
        if self.interpolated is None:
            self.interpolated = np.zeros(n, dtype=bool)
        self.interpolated = np.asarray(self.interpolated, dtype=bool)
        if self.node_scores.shape != (n,) or self.interpolated.shape != (n,):
            raise ValueError("boxes, node_scores and interpolated must align")
        self.start_frame = int(self.start_frame)

    def __len__(self) -> int:
        return len(self.boxes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxedTrack):
            return NotImplemented
        return (
            self.category == other.category
            and self.start_frame == other.start_frame
            and np.array_equal(self.boxes, other.boxes)
            and np.array_equal(self.node_scores, other.node_scores)
            and np.array_equal(self.interpolated, other.interpolated)
            and self.score == other.score
        )

    __hash__ = None

    @property
    def end_frame(self) -> int:
        """Exclusive end of the frame span."""
        return self.start_frame + len(self.boxes)

    @property
    def span(self) -> tuple[int, int]:
        return (self.start_frame, self.end_frame)

    @property
    def confidence(self) -> float:
        real = ~self.interpolated
        if not real.any():
            return 0.0
        return float(self.node_scores[real].mean())

    def covers(self, frame: int) -> bool:
        return self.start_frame <= frame < self.end_frame

    def box_at(self, frame: int, clamp: bool = False) -> BBox:
        """Box at ``frame``; with ``clamp`` the nearest endpoint box is replicated."""
        i = frame - self.start_frame
        if clamp:
            i = min(max(i, 0), len(self.boxes) - 1)
        elif not 0 <= i < len(self.boxes):
            raise IndexError(f"frame {frame} outside track span {self.span}")
        return BBox(*self.boxes[i])

    def clip(self, begin: int, end: int) -> Optional["BoxedTrack"]:
        lo = max(begin, self.start_frame)
        hi = min(end, self.end_frame)
        if lo >= hi:
            return None
        i, j = lo - self.start_frame, hi - self.start_frame
        return BoxedTrack(
            self.category,
            lo,
            self.boxes[i:j].copy(),
            self.node_scores[i:j].copy(),
            self.interpolated[i:j].copy(),
            self.score,
        )


def temporal_overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def viou(a: BoxedTrack, b: BoxedTrack) -> float:
    """Summed per-frame IoU over the shared frames, divided by the union span length."""
    lo = max(a.start_frame, b.start_frame)
    hi = min(a.end_frame, b.end_frame)
    if lo >= hi:
        return 0.0
    union = max(a.end_frame, b.end_frame) - min(a.start_frame, b.start_frame)
    ba = a.boxes[lo - a.start_frame:hi - a.start_frame]
    bb = b.boxes[lo - b.start_frame:hi - b.start_frame]
    return float(paired_iou(ba, bb).sum() / union)
