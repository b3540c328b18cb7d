"""Relation detection and tagging metrics, plus trajectory (video object detection) mAP.

Conventions: AP is the mean of the precision at each true-positive rank
divided by the number of ground truths (no interpolation).  Videos without
ground-truth relations are left out of every mean and counted in the
diagnostics.  Per-video values are averaged in sorted video-id order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .geometry import viou
from .relations import RelationInstance

RECALL_KS = (50, 100)
TAGGING_KS = (1, 5, 10)


def match_instance(pred: RelationInstance, gt: RelationInstance, thr: float = 0.5) -> bool:
    return (pred.triplet == gt.triplet
            and viou(pred.subject, gt.subject) >= thr
            and viou(pred.object, gt.object) >= thr)


def _rank(items, score):
    """Indices sorted by descending score; equal scores keep input order."""
    return sorted(range(len(items)), key=lambda i: -score(items[i]))


def greedy_match(preds: Sequence[RelationInstance], gts: Sequence[RelationInstance],
                 thr: float = 0.5) -> list:
    """Walk predictions by descending score; each takes the best still-free GT.

    Returns, per ranked prediction, the matched GT index or None.  The best
    GT is the one with the largest min(subject vIoU, object vIoU).
    """
    free = set(range(len(gts)))
    out = []
    for i in _rank(preds, lambda p: p.score):
        p = preds[i]
        best, best_ov = None, -1.0
        for j in sorted(free):
            g = gts[j]
            if g.triplet != p.triplet:
                continue
            ov = min(viou(p.subject, g.subject), viou(p.object, g.object))
            if ov >= thr and ov > best_ov:
                best, best_ov = j, ov
        if best is not None:
            free.discard(best)
        out.append(best)
    return out


def average_precision(hits: Sequence[bool], n_gt: int) -> float:
    if n_gt == 0:
        return 0.0
    tp = 0
    total = 0.0
    for rank, hit in enumerate(hits, start=1):
        if hit:
            tp += 1
            total += tp / rank
    return total / n_gt


def _videos_with_gt(gts: Mapping) -> list:
    return sorted(v for v, g in gts.items() if len(g) > 0)


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def video_relation_ap(preds, gts, thr=0.5) -> float:
    m = greedy_match(preds, gts, thr)
    return average_precision([j is not None for j in m], len(gts))


def video_recall(preds, gts, k, thr=0.5) -> float:
    if not gts:
        return 0.0
    m = greedy_match(preds, gts, thr)
    return sum(j is not None for j in m[:k]) / len(gts)


def video_tagging_precision(preds, gts, k) -> float:
    best: dict = {}
    for p in preds:
        if p.triplet not in best or p.score > best[p.triplet]:
            best[p.triplet] = p.score
    tags = sorted(best, key=lambda t: -best[t])[:k]
    if not tags:
        return 0.0
    gt_tags = {g.triplet for g in gts}
    return sum(t in gt_tags for t in tags) / min(k, len(tags))


def relation_detection_map(preds: Mapping, gts: Mapping, thr: float = 0.5) -> float:
    return _mean(video_relation_ap(preds.get(v, []), gts[v], thr) for v in _videos_with_gt(gts))


def recall_at_k(preds: Mapping, gts: Mapping, k: int, thr: float = 0.5) -> float:
    return _mean(video_recall(preds.get(v, []), gts[v], k, thr) for v in _videos_with_gt(gts))


def tagging_precision_at_k(preds: Mapping, gts: Mapping, k: int) -> float:
    return _mean(video_tagging_precision(preds.get(v, []), gts[v], k) for v in _videos_with_gt(gts))


def trajectory_map(pred_tracks: Mapping, gt_tracks: Mapping, thr: float = 0.5) -> float:
    """Per-category AP of score-ranked tracks matched at vIoU >= thr, averaged over GT categories.

    Tracks are ranked by ``confidence``.
    """
    return trajectory_ap_per_category(pred_tracks, gt_tracks, thr)[1]


def trajectory_ap_per_category(pred_tracks: Mapping, gt_tracks: Mapping, thr: float = 0.5):
    cats = sorted({t.category for v in gt_tracks for t in gt_tracks[v]})
    per_cat = {}
    for cat in cats:
        gts = {v: [t for t in gt_tracks[v] if t.category == cat] for v in sorted(gt_tracks)}
        n_gt = sum(len(g) for g in gts.values())
        preds = [(v, t) for v in sorted(pred_tracks) for t in pred_tracks[v] if t.category == cat]
        free = {v: set(range(len(g))) for v, g in gts.items()}
        hits = []
        for i in _rank(preds, lambda vt: vt[1].confidence):
            v, t = preds[i]
            best, best_ov = None, -1.0
            for j in sorted(free.get(v, ())):
                ov = viou(t, gts[v][j])
                if ov >= thr and ov > best_ov:
                    best, best_ov = j, ov
            if best is not None:
                free[v].discard(best)
            hits.append(best is not None)
        per_cat[cat] = average_precision(hits, n_gt)
    return per_cat, _mean(per_cat[c] for c in cats)


@dataclass
class EvalReport:
    metrics: dict = field(default_factory=dict)
    per_video: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metrics": self.metrics, "per_video": self.per_video, "diagnostics": self.diagnostics}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(dict(d["metrics"]), dict(d["per_video"]), dict(d["diagnostics"]))


def evaluate(preds: Mapping, gts: Mapping, thr: float = 0.5,
             pred_tracks: Mapping = None, gt_tracks: Mapping = None) -> EvalReport:
    """Full metric suite over ``video_id -> [RelationInstance]`` maps."""
    videos = _videos_with_gt(gts)
    per_video = {}
    n_matched = n_gt = n_pred = 0
    for v in videos:
        p, g = preds.get(v, []), gts[v]
        m = greedy_match(p, g, thr)
        hits = [j is not None for j in m]
        row = {"mAP": average_precision(hits, len(g))}
        for k in RECALL_KS:
            row[f"R@{k}"] = sum(hits[:k]) / len(g)
        for k in TAGGING_KS:
            row[f"tagging_P@{k}"] = video_tagging_precision(p, g, k)
        per_video[v] = row
        n_matched += sum(hits)
        n_gt += len(g)
        n_pred += len(p)

    names = ["mAP"] + [f"R@{k}" for k in RECALL_KS] + [f"tagging_P@{k}" for k in TAGGING_KS]
    metrics = {name: _mean(per_video[v][name] for v in videos) for name in names}
    if gt_tracks is not None:
        metrics["trajectory_mAP"] = trajectory_map(pred_tracks or {}, gt_tracks, thr)
    diagnostics = {
        "videos_evaluated": len(videos),
        "videos_without_gt": sorted(v for v in set(gts) | set(preds) if v not in set(videos)),
        "gt_relations": n_gt,
        "predictions": n_pred,
        "matched_gt": n_matched,
        "unmatched_gt": n_gt - n_matched,
        "unmatched_predictions": n_pred - n_matched,
    }
    return EvalReport(metrics, per_video, diagnostics)
