"""Multi-modal pair features: motion, location mask, language and visual."""
from __future__ import annotations

import json
import threading
import zlib
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import iou, union_box
from .segments import TrajectoryPair

MOTION_OFFSETS = (0, 8, 16, 24, 31)
DESCRIPTOR_DIM = 10
MOTION_DIM = DESCRIPTOR_DIM * (2 * len(MOTION_OFFSETS) - 1)  # 50 static + 40 dynamic
MASK_RES = 32
EMBED_DIM = 300
VISUAL_DIM = 4096

_ZERO_VISUAL = np.zeros((3, VISUAL_DIM))
_ZERO_VISUAL.setflags(write=False)


class UnknownCategoryError(KeyError):
    def __str__(self):
        return f"category {self.args[0]!r} missing from the embedding table"


@dataclass(eq=False)
class PairFeature:
    motion: np.ndarray    # (90,)
    mask: np.ndarray      # (2, 32, 32) of {0, 1}
    language: np.ndarray  # (600,)
    visual: np.ndarray    # (3, 4096): subject, object, union

    def __eq__(self, other):
        if not isinstance(other, PairFeature):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("motion", "mask", "language", "visual"))


def frame_pair_descriptor(sub: Sequence[float], obj: Sequence[float],
                          frame_w: float, frame_h: float) -> np.ndarray:
    """Relative offset, log size ratio, normalized subject geometry, object area, IoU."""
    xs, ys, ws, hs = sub
    xo, yo, wo, ho = obj
    return np.array([
        (xo - xs) / ws,
        (yo - ys) / hs,
        np.log(wo / ws),
        np.log(ho / hs),
        xs / frame_w,
        ys / frame_h,
        ws / frame_w,
        hs / frame_h,
        (wo * ho) / (frame_w * frame_h),
        iou(sub, obj),
    ])


def sample_frames(segment) -> list[int]:
    last = segment.end - 1
    return [min(segment.begin + off, last) for off in MOTION_OFFSETS]


def motion_feature(pair: TrajectoryPair, frame_size: tuple[float, float]) -> np.ndarray:
    """Static descriptors at 5 sampled frames followed by their differences to the first.

    Trajectories that do not reach a sampled frame contribute their nearest
    endpoint box.
    """
    w, h = frame_size
    feats = [
        frame_pair_descriptor(pair.subject.box_at(t, clamp=True),
                              pair.object.box_at(t, clamp=True), w, h)
        for t in sample_frames(pair.segment)
    ]
    static = np.concatenate(feats)
    dynamic = np.concatenate([f - feats[0] for f in feats[1:]])
    return np.concatenate([static, dynamic])


def box_mask(box: Sequence[float], frame_w: float, frame_h: float, res: int = MASK_RES) -> np.ndarray:
    """Cells whose centers fall inside the half-open box ``[x, x+w) x [y, y+h)``."""
    x, y, bw, bh = box
    cx = (np.arange(res) + 0.5) * frame_w / res
    cy = (np.arange(res) + 0.5) * frame_h / res
    cols = (cx >= x) & (cx < x + bw)
    rows = (cy >= y) & (cy < y + bh)
    return (rows[:, None] & cols[None, :]).astype(np.uint8)


def mask_feature(pair: TrajectoryPair, frame_size: tuple[float, float]) -> np.ndarray:
    w, h = frame_size
    mid = pair.segment.middle
    return np.stack([
        box_mask(pair.subject.box_at(mid, clamp=True), w, h),
        box_mask(pair.object.box_at(mid, clamp=True), w, h),
    ])


class CategoryEmbeddingTable:
    """Category name -> 300-d word vector."""

    def __init__(self, vectors: dict):
        self.vectors = {}
        for cat, vec in vectors.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (EMBED_DIM,):
                raise ValueError(f"embedding for {cat!r} has shape {arr.shape}, expected ({EMBED_DIM},)")
            self.vectors[cat] = arr

    def __getitem__(self, cat) -> np.ndarray:
        try:
            return self.vectors[cat]
        except KeyError:
            raise UnknownCategoryError(cat) from None

    def __contains__(self, cat) -> bool:
        return cat in self.vectors

    @classmethod
    def load(cls, path) -> "CategoryEmbeddingTable":
        with open(path) as f:
            return cls(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump({k: v.tolist() for k, v in sorted(self.vectors.items())}, f)

    @classmethod
    def hashed(cls, categories: Iterable[str]) -> "CategoryEmbeddingTable":
        """Deterministic unit-norm stand-in vectors seeded by the category name."""
        vecs = {}
        for cat in categories:
            rng = np.random.default_rng(zlib.crc32(cat.encode()))
            v = rng.standard_normal(EMBED_DIM)
            vecs[cat] = v / np.linalg.norm(v)
        return cls(vecs)


def language_feature(sub_cat: str, obj_cat: str, table: CategoryEmbeddingTable) -> np.ndarray:
    return np.concatenate([table[sub_cat], table[obj_cat]])


def _quantize(box) -> tuple:
    return tuple(int(round(v)) for v in box)


class VisualFeatureStore:
    """Read-only lookup of precomputed 4096-d region features.

    Keys are ``(video, frame, x, y, w, h)`` with the box rounded to integer
    pixels.  Missing keys give a zero vector and bump ``missing``.
    """

    def __init__(self, records: Optional[dict] = None):
        self._feats = dict(records or {})
        self._lock = threading.Lock()
        self.missing = 0

    def __len__(self) -> int:
        return len(self._feats)

    def add(self, video: str, frame: int, box, feat) -> None:
        feat = np.asarray(feat, dtype=float)
        if feat.shape != (VISUAL_DIM,):
            raise ValueError(f"visual feature must have {VISUAL_DIM} values, got {feat.shape}")
        self._feats[(video, int(frame)) + _quantize(box)] = feat

    def lookup(self, video: str, frame: int, box) -> np.ndarray:
        key = (video, int(frame)) + _quantize(box)
        feat = self._feats.get(key)
        if feat is None:
            with self._lock:
                self.missing += 1
            return np.zeros(VISUAL_DIM)
        return feat

    @classmethod
    def load(cls, path) -> "VisualFeatureStore":
        store = cls()
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    store.add(rec["video"], rec["frame"], rec["bbox"], rec["feat"])
                except (ValueError, KeyError) as e:
                    raise ValueError(f"{path}:{lineno}: bad visual feature record ({e})") from e
        return store


def visual_feature(pair: TrajectoryPair, store: Optional[VisualFeatureStore],
                   video_id: str = "") -> np.ndarray:
    if store is None:
        return _ZERO_VISUAL
    mid = pair.segment.middle
    sb = pair.subject.box_at(mid, clamp=True)
    ob = pair.object.box_at(mid, clamp=True)
    return np.stack([
        store.lookup(video_id, mid, sb),
        store.lookup(video_id, mid, ob),
        store.lookup(video_id, mid, union_box(sb, ob)),
    ])


def pair_feature(pair: TrajectoryPair, frame_size: tuple[float, float],
                 table: CategoryEmbeddingTable, store: Optional[VisualFeatureStore] = None,
                 video_id: str = "") -> PairFeature:
    return PairFeature(
        motion=motion_feature(pair, frame_size),
        mask=mask_feature(pair, frame_size),
        language=language_feature(pair.subject.category, pair.object.category, table),
        visual=visual_feature(pair, store, video_id),
    )
