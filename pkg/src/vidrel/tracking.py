"""Detection graph, cross-frame linking and seq-NMS style trajectory extraction.

Every detection is a node.  Consecutive-frame boxes of the same category are
linked when their IoU clears a threshold.  Broken tracklets are then bridged
across short gaps by chains of interpolated, zero-score nodes, and
trajectories are pulled out one at a time as the best-scoring maximal path.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import (
    BBox,
    BoxedTrack,
    Detection,
    area_ratio,
    interpolate_box,
    iou,
    iou_matrix,
    scale_ratio,
)


class NodeId(NamedTuple):
    frame: int
    index: int


@dataclass
class LinkConfig:
    iou_threshold: float = 0.2
    max_gap: int = 7
    ratio_gate: float = 2.0
    max_candidates_per_endpoint: int = 5
    min_traj_score: float = 0.3
    min_traj_length: int = 2
    use_cflm: bool = True

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError("iou_threshold must lie in (0, 1)")
        if self.max_gap < 2:
            raise ValueError("max_gap must be >= 2")
        if self.ratio_gate < 1.0:
            raise ValueError("ratio_gate must be >= 1")
        if self.max_candidates_per_endpoint < 1:
            raise ValueError("max_candidates_per_endpoint must be >= 1")


@dataclass
class DetGraph:
    nodes: dict = field(default_factory=dict)  # NodeId -> Detection
    out_edges: dict = field(default_factory=dict)  # NodeId -> set[NodeId]
    in_edges: dict = field(default_factory=dict)
    frame_count: int = 0
    start_frame: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def add_node(self, nid: NodeId, det: Detection) -> None:
        if nid in self.nodes:
            raise ValueError(f"duplicate node {nid}")
        self.nodes[nid] = det
        self.out_edges[nid] = set()
        self.in_edges[nid] = set()

    def add_edge(self, u: NodeId, v: NodeId) -> None:
        if u.frame >= v.frame:
            raise ValueError(f"edge {u} -> {v} does not go forward in time")
        self.out_edges[u].add(v)
        self.in_edges[v].add(u)

    def remove_nodes(self, nids) -> None:
        for nid in nids:
            for v in self.out_edges.pop(nid):
                self.in_edges[v].discard(nid)
            for u in self.in_edges.pop(nid):
                self.out_edges[u].discard(nid)
            del self.nodes[nid]

    def frame_nodes(self, frame: int) -> list:
        return sorted(n for n in self.nodes if n.frame == frame)

    def edges(self):
        for u in sorted(self.out_edges):
            for v in sorted(self.out_edges[u]):
                yield u, v

    def copy(self) -> "DetGraph":
        return copy.deepcopy(self)


def build_graph(frames: Sequence[Sequence[Detection]], cfg: LinkConfig = None,
                start_frame: int = 0) -> DetGraph:
    """Nodes for every detection, edges between same-category boxes of adjacent frames.

    ``frames[k]`` holds the detections of frame ``start_frame + k``.
    """
    cfg = cfg or LinkConfig()
    g = DetGraph(frame_count=len(frames), start_frame=start_frame)
    for k, dets in enumerate(frames):
        t = start_frame + k
        for i, det in enumerate(dets):
            if det.interpolated:
                raise ValueError("build_graph expects detector output, got an interpolated node")
            g.add_node(NodeId(t, i), det)

    for k in range(len(frames) - 1):
        prev, nxt = frames[k], frames[k + 1]
        if not prev or not nxt:
            continue
        t = start_frame + k
        ious = iou_matrix([d.bbox for d in prev], [d.bbox for d in nxt])
        cats_prev = np.array([d.category for d in prev], dtype=object)
        cats_next = np.array([d.category for d in nxt], dtype=object)
        same = cats_prev[:, None] == cats_next[None, :]
        for i, j in zip(*np.nonzero(same & (ious > cfg.iou_threshold))):
            g.add_edge(NodeId(t, int(i)), NodeId(t + 1, int(j)))
    return g


def _shape_compatible(a: BBox, b: BBox, gate: float) -> bool:
    return scale_ratio(a, b) <= gate and area_ratio(a, b) <= gate


def cross_frame_link(g: DetGraph, cfg: LinkConfig = None) -> DetGraph:
    """Bridge tracklet ends to tracklet starts 2..max_gap frames later.

    A tail (no successor) and a head (no predecessor) of the same category and
    compatible shape are joined by one interpolated node per skipped frame.
    Candidate bridges are taken in order of smaller gap, then larger IoU of the
    endpoint boxes; each endpoint takes part in at most
    ``max_candidates_per_endpoint`` bridges.  Modifies and returns ``g``.
    """
    cfg = cfg or LinkConfig()
    tails = [n for n in sorted(g.nodes) if not g.out_edges[n]]
    heads = [n for n in sorted(g.nodes) if not g.in_edges[n]]
    heads_by_frame: dict[int, list] = {}
    for h in heads:
        heads_by_frame.setdefault(h.frame, []).append(h)

    candidates = []
    for u in tails:
        du = g.nodes[u]
        for gap in range(2, cfg.max_gap + 1):
            for v in heads_by_frame.get(u.frame + gap, ()):
                dv = g.nodes[v]
                if dv.category != du.category:
                    continue
                if not _shape_compatible(du.bbox, dv.bbox, cfg.ratio_gate):
                    continue
                candidates.append((gap, -iou(du.bbox, dv.bbox), u, v))
    candidates.sort()

    used: dict[NodeId, int] = {}
    next_index = {}
    for nid in g.nodes:
        next_index[nid.frame] = max(next_index.get(nid.frame, 0), nid.index + 1)
    cap = cfg.max_candidates_per_endpoint
    for gap, _, u, v in candidates:
        if used.get(u, 0) >= cap or used.get(v, 0) >= cap:
            continue
        used[u] = used.get(u, 0) + 1
        used[v] = used.get(v, 0) + 1
        a, b = g.nodes[u].bbox, g.nodes[v].bbox
        prev = u
        for t in range(u.frame + 1, v.frame):
            nid = NodeId(t, next_index.get(t, 0))
            next_index[t] = nid.index + 1
            box = interpolate_box(a, b, (t - u.frame) / gap)
            g.add_node(nid, Detection(t, g.nodes[u].category, 0.0, box, interpolated=True))
            g.add_edge(prev, nid)
            prev = nid
        g.add_edge(prev, v)
    return g


def best_path(g: DetGraph) -> tuple[list, float]:
    """Highest-scoring maximal path (source to sink) by dynamic programming.

    Path score is the sum of node scores.  Among equal scores the path with the
    lexicographically smallest node sequence wins, i.e. earliest start frame,
    then lowest start index, and so on along the path.  Raises ValueError on an
    empty graph.
    """
    if not g.nodes:
        raise ValueError("no path: graph is empty")
    best: dict[NodeId, float] = {}
    nxt: dict[NodeId, Optional[NodeId]] = {}
    # edges only go forward in time, so descending frame order is reverse-topological
    for v in sorted(g.nodes, reverse=True):
        succ = None
        for w in sorted(g.out_edges[v]):
            if succ is None or best[w] > best[succ]:
                succ = w
        score = g.nodes[v].score
        best[v] = score if succ is None else score + best[succ]
        nxt[v] = succ

    start = None
    for v in sorted(g.nodes):
        if g.in_edges[v]:
            continue
        if start is None or best[v] > best[start]:
            start = v
    path = [start]
    while nxt[path[-1]] is not None:
        path.append(nxt[path[-1]])
    return path, best[start]


def path_to_track(g: DetGraph, path: Sequence[NodeId], score: float = None) -> BoxedTrack:
    dets = [g.nodes[n] for n in path]
    cats = {d.category for d in dets}
    if len(cats) != 1:
        raise ValueError(f"path mixes categories {sorted(cats)}")
    return BoxedTrack(
        category=dets[0].category,
        start_frame=path[0].frame,
        boxes=np.array([d.bbox for d in dets], dtype=float),
        node_scores=np.array([d.score for d in dets], dtype=float),
        interpolated=np.array([d.interpolated for d in dets], dtype=bool),
        score=score,
    )


def _prune_dangling(g: DetGraph) -> None:
    stack = [n for n, d in g.nodes.items() if d.interpolated and (not g.in_edges[n] or not g.out_edges[n])]
    while stack:
        n = stack.pop()
        if n not in g.nodes:
            continue
        neighbours = list(g.in_edges[n]) + list(g.out_edges[n])
        g.remove_nodes([n])
        for m in neighbours:
            if m in g.nodes and g.nodes[m].interpolated and (not g.in_edges[m] or not g.out_edges[m]):
                stack.append(m)


def extract_trajectories(g: DetGraph, cfg: LinkConfig = None) -> list[BoxedTrack]:
    """Repeatedly take the best path and delete its nodes from ``g`` (in place)."""
    cfg = cfg or LinkConfig()
    tracks = []
    while g.nodes:
        path, score = best_path(g)
        if score < cfg.min_traj_score or len(path) < cfg.min_traj_length:
            break
        tracks.append(path_to_track(g, path, score))
        g.remove_nodes(path)
        _prune_dangling(g)
    return tracks


def track_frames(frames: Sequence[Sequence[Detection]], cfg: LinkConfig = None,
                 start_frame: int = 0) -> list[BoxedTrack]:
    """Graph building, optional cross-frame linking and extraction in one call."""
    cfg = cfg or LinkConfig()
    g = build_graph(frames, cfg, start_frame=start_frame)
    if cfg.use_cflm:
        cross_frame_link(g, cfg)
    return extract_trajectories(g, cfg)
