"""End-to-end wiring: segments -> tracks -> pairs -> features -> predictions -> merged relations."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import CategoryEmbeddingTable, VisualFeatureStore, pair_feature
from .formats import DetectionFile, GroundTruth
from .geometry import BoxedTrack, viou
from .merge import merge_greedy
from .model import RelationModel, predict_pairs
from .relations import RelationInstance
from .segments import Segment, enumerate_pairs, split_segments, track_segment
from .synth import frame_predicates, label_for_span
from .tracking import LinkConfig, track_frames

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    link: LinkConfig = field(default_factory=LinkConfig)
    segment_length: int = 32
    segment_stride: int = 16
    min_pair_overlap: int = 8
    require_middle: bool = True
    top_k: int = 3
    min_prob: float = 0.05
    merge_viou: float = 0.5
    min_det_score: float = 0.01

    def __post_init__(self):
        if isinstance(self.link, dict):
            self.link = LinkConfig(**self.link)

    def to_dict(self) -> dict:
        return asdict(self)


def _filtered_frames(det: DetectionFile, min_score: float):
    return [[d for d in dets if d.score > min_score] for dets in det.frames]


def default_table(*sources) -> CategoryEmbeddingTable:
    cats = set()
    for s in sources:
        cats |= set(s)
    return CategoryEmbeddingTable.hashed(sorted(cats))


def segment_pairs(det: DetectionFile, cfg: PipelineConfig):
    """Yield ``(segment, tracks, pairs)`` for every segment of the video."""
    frames = _filtered_frames(det, cfg.min_det_score)
    if det.frame_count == 0:
        return
    for seg in split_segments(det.frame_count, cfg.segment_length, cfg.segment_stride):
        try:
            tracks = track_segment(frames, seg, cfg.link)
            pairs = enumerate_pairs(tracks, seg, cfg.min_pair_overlap, cfg.require_middle)
        except Exception as e:
            raise PipelineError(f"video {det.video_id} segment [{seg.begin}, {seg.end}): {e}") from e
        yield seg, tracks, pairs


def run_pipeline(det: DetectionFile, model: RelationModel, cfg: PipelineConfig = None,
                 table: Optional[CategoryEmbeddingTable] = None,
                 store: Optional[VisualFeatureStore] = None) -> list[RelationInstance]:
    cfg = cfg or PipelineConfig()
    table = table or default_table(det.categories())
    grouped = []
    for seg, _, pairs in segment_pairs(det, cfg):
        try:
            feats = [pair_feature(p, det.frame_size, table, store, det.video_id) for p in pairs]
            insts = predict_pairs(model, pairs, feats, cfg.top_k, cfg.min_prob)
        except Exception as e:
            raise PipelineError(f"video {det.video_id} segment [{seg.begin}, {seg.end}): {e}") from e
        grouped.append((seg, insts))
    return merge_greedy(grouped, cfg.merge_viou)


def run_many(dets: Sequence[DetectionFile], model: RelationModel, cfg: PipelineConfig = None,
             table: Optional[CategoryEmbeddingTable] = None, store: Optional[VisualFeatureStore] = None,
             workers: int = 1) -> dict:
    """``video_id -> relations`` for several videos; the result does not depend on ``workers``."""
    cfg = cfg or PipelineConfig()
    if table is None:
        table = default_table(*(d.categories() for d in dets))

    def one(d):
        return run_pipeline(d, model, cfg, table, store)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, dets))
    else:
        results = [one(d) for d in dets]
    return {d.video_id: r for d, r in zip(dets, results)}


def track_video(det: DetectionFile, link: LinkConfig = None, min_det_score: float = 0.01) -> list[BoxedTrack]:
    """Whole-video trajectories (no segmentation)."""
    return track_frames(_filtered_frames(det, min_det_score), link or LinkConfig())


def _match_gt(track: BoxedTrack, gt: GroundTruth, seg: Segment, thr: float = 0.5) -> Optional[int]:
    t = track.clip(seg.begin, seg.end)
    best, best_v = None, thr
    for o in gt.objects:
        if o.category != track.category:
            continue
        g = o.track.clip(seg.begin, seg.end)
        if g is None:
            continue
        v = viou(t, g)
        if v >= best_v:
            best, best_v = o.tid, v
    return best


def featurize_scene(det: DetectionFile, gt: GroundTruth, table: CategoryEmbeddingTable,
                    cfg: PipelineConfig = None, spatial_vocab=None, action_vocab=None,
                    store: Optional[VisualFeatureStore] = None, near_distance: float = 150.0,
                    speed_threshold: float = 0.25):
    """Training samples from tracked pairs, labelled against ground truth.

    Each tracked trajectory is matched to the GT object of its category with
    the highest in-segment vIoU (at least 0.5).  A pair of matched, distinct
    objects takes, per head, the predicate holding on at least half of the
    pair's frames (evaluated on the true boxes); everything else is labelled
    "none".  Returns ``(samples, metas)``.
    """
    from .model import ACTION_PREDICATES, SPATIAL_PREDICATES

    cfg = cfg or PipelineConfig()
    spatial_vocab = list(spatial_vocab or SPATIAL_PREDICATES)
    action_vocab = list(action_vocab or ACTION_PREDICATES)
    samples, metas = [], []
    for seg, tracks, pairs in segment_pairs(det, cfg):
        tids = {id(t): _match_gt(t, gt, seg) for t in tracks}
        for p in pairs:
            s_tid, o_tid = tids[id(p.subject)], tids[id(p.object)]
            label = (0, 0)
            lo, hi = p.span
            if s_tid is not None and o_tid is not None and s_tid != o_tid:
                sb = gt.object(s_tid).track.clip(lo, hi)
                ob = gt.object(o_tid).track.clip(lo, hi)
                if sb is not None and ob is not None and len(sb) == len(ob):
                    sp, ac = frame_predicates(sb.boxes, ob.boxes, near_distance, speed_threshold)
                    label = (label_for_span(sp, spatial_vocab), label_for_span(ac, action_vocab))
            samples.append((pair_feature(p, det.frame_size, table, store, det.video_id), label))
            metas.append({"video_id": det.video_id, "segment": [seg.begin, seg.end],
                          "subject_tid": s_tid, "object_tid": o_tid})
    return samples, metas


def cap_negatives(samples: list, metas: list = None, ratio: float = 3.0, seed: int = 0):
    """Keep at most ``ratio`` all-none samples per positive, chosen deterministically."""
    pos = [i for i, s in enumerate(samples) if s[1] != (0, 0)]
    neg = [i for i, s in enumerate(samples) if s[1] == (0, 0)]
    limit = int(ratio * max(len(pos), 1))
    if len(neg) > limit:
        rng = np.random.default_rng(seed)
        neg = sorted(rng.choice(neg, size=limit, replace=False).tolist())
    keep = sorted(pos + neg)
    return [samples[i] for i in keep], ([metas[i] for i in keep] if metas is not None else None)
