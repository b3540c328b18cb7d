"""Synthetic moving-rectangle scenes with ground-truth trajectories and relations.

Objects are rectangles moving with piecewise-constant velocity.  The detector
is simulated by jittering, dropping and scoring the true boxes.  Relations
follow simple geometric rules evaluated per frame on the true boxes:

* two objects interact only while one is inside the other or their centers
  are within ``near_distance`` pixels;
* spatial: ``inside`` when the subject box lies within the object box,
  otherwise ``left_of`` / ``right_of`` / ``above`` / ``below`` by the dominant
  axis of the center offset (nothing when the object lies within the subject);
* action: ``towards`` / ``away`` when the center distance shrinks / grows by at
  least ``speed_threshold`` pixels per frame.

Ground-truth relations are the maximal frame runs over which a predicate holds.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .formats import DetectionFile, GroundTruth, GTObject, GTRelation
from .geometry import BBox, BoxedTrack, Detection
from .model import ACTION_PREDICATES, SPATIAL_PREDICATES

CATEGORIES = ("person", "dog", "car", "bicycle", "ball", "cat", "horse", "chair")


@dataclass
class ObjectSpec:
    category: str
    box: list  # [x, y, w, h] at frame 0
    velocity: list = field(default_factory=lambda: [[0, 0.0, 0.0]])  # [[from_frame, vx, vy], ...]


@dataclass
class SynthConfig:
    seed: int = 0
    video_id: str = "synth"
    frame_count: int = 96
    frame_size: tuple = (640, 360)
    objects: list = field(default_factory=list)  # ObjectSpec or dict
    jitter: float = 0.0
    dropout: float = 0.0
    occlusions: list = field(default_factory=list)  # [[object_index, begin, end), ...]
    score_range: tuple = (0.5, 1.0)
    near_distance: float = 150.0
    speed_threshold: float = 0.25

    def __post_init__(self):
        self.objects = [o if isinstance(o, ObjectSpec) else ObjectSpec(**o) for o in self.objects]
        self.frame_size = tuple(self.frame_size)
        self.score_range = tuple(self.score_range)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Scene:
    detections: DetectionFile
    gt: GroundTruth


def simulate_track(spec: ObjectSpec, frame_count: int, frame_size) -> tuple[BoxedTrack, bool]:
    """True boxes over the whole video; positions are clamped to the frame (and flagged)."""
    W, H = frame_size
    x, y, w, h = (float(v) for v in spec.box)
    keys = sorted((int(f), float(vx), float(vy)) for f, vx, vy in spec.velocity)
    pos = np.zeros((frame_count, 2))
    vx = vy = 0.0
    k = 0
    for t in range(frame_count):
        pos[t] = (x, y)
        while k < len(keys) and keys[k][0] <= t:
            _, vx, vy = keys[k]
            k += 1
        x += vx
        y += vy
    clamped = np.column_stack([np.clip(pos[:, 0], 0.0, W - w), np.clip(pos[:, 1], 0.0, H - h)])
    flagged = bool(np.any(clamped != pos))
    boxes = np.column_stack([clamped, np.full(frame_count, w), np.full(frame_count, h)])
    return BoxedTrack(spec.category, 0, boxes), flagged


def _contains(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    return ((inner[:, 0] >= outer[:, 0]) & (inner[:, 1] >= outer[:, 1])
            & (inner[:, 0] + inner[:, 2] <= outer[:, 0] + outer[:, 2])
            & (inner[:, 1] + inner[:, 3] <= outer[:, 1] + outer[:, 3]))


def frame_predicates(sub: np.ndarray, obj: np.ndarray, near_distance: float = 150.0,
                     speed_threshold: float = 0.25) -> tuple[list, list]:
    """Per-frame spatial and action predicate (or None) for aligned ``(n, 4)`` box arrays."""
    n = len(sub)
    cs = sub[:, :2] + sub[:, 2:] / 2
    co = obj[:, :2] + obj[:, 2:] / 2
    off = co - cs
    dist = np.hypot(off[:, 0], off[:, 1])
    s_in_o = _contains(obj, sub)
    o_in_s = _contains(sub, obj)
    near = s_in_o | o_in_s | (dist <= near_distance)
    if n > 1:
        rate = np.diff(dist)
        rate = np.append(rate, rate[-1])
    else:
        rate = np.zeros(1)
    spatial, action = [], []
    for t in range(n):
        if not near[t]:
            spatial.append(None)
            action.append(None)
            continue
        if s_in_o[t]:
            spatial.append("inside")
        elif o_in_s[t]:
            spatial.append(None)
        elif abs(off[t, 0]) >= abs(off[t, 1]):
            spatial.append("left_of" if off[t, 0] > 0 else "right_of")
        else:
            spatial.append("above" if off[t, 1] > 0 else "below")
        if rate[t] <= -speed_threshold:
            action.append("towards")
        elif rate[t] >= speed_threshold:
            action.append("away")
        else:
            action.append(None)
    return spatial, action


def _runs(labels, offset=0):
    out = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[start]:
            if labels[start] is not None:
                out.append((labels[start], offset + start, offset + t))
            start = t
    return out


def derive_relations(objects: list, near_distance: float = 150.0, speed_threshold: float = 0.25):
    """Relations and negative pairs from GT objects (list of GTObject)."""
    relations, negatives = [], []
    for s in objects:
        for o in objects:
            if s.tid == o.tid:
                continue
            lo = max(s.track.start_frame, o.track.start_frame)
            hi = min(s.track.end_frame, o.track.end_frame)
            found = False
            if lo < hi:
                sp, ac = frame_predicates(s.track.clip(lo, hi).boxes, o.track.clip(lo, hi).boxes,
                                          near_distance, speed_threshold)
                for labels in (sp, ac):
                    for pred, b, e in _runs(labels, lo):
                        relations.append(GTRelation(s.tid, pred, o.tid, b, e))
                        found = True
            if not found:
                negatives.append([s.tid, o.tid])
    return relations, negatives


def generate_scene(cfg: SynthConfig) -> Scene:
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.frame_size
    objects = []
    for i, spec in enumerate(cfg.objects):
        track, flagged = simulate_track(spec, cfg.frame_count, cfg.frame_size)
        objects.append(GTObject(i, track, flagged))
    relations, negatives = derive_relations(objects, cfg.near_distance, cfg.speed_threshold)

    hidden = set()
    for idx, b, e in cfg.occlusions:
        hidden.update((int(idx), t) for t in range(int(b), int(e)))
    lo, hi = cfg.score_range
    frames = []
    for t in range(cfg.frame_count):
        dets = []
        for obj in objects:
            # draw every random number regardless of visibility so that scenes
            # differing only in occlusions share their noise
            drop = rng.uniform() < cfg.dropout
            noise = rng.normal(0.0, 1.0, 4) * cfg.jitter
            score = float(rng.uniform(lo, hi))
            if drop or (obj.tid, t) in hidden:
                continue
            x, y, w, h = obj.track.boxes[t] + noise if cfg.jitter > 0 else obj.track.boxes[t]
            w, h = max(w, 1.0), max(h, 1.0)
            x = min(max(x, 0.0), W - w)
            y = min(max(y, 0.0), H - h)
            dets.append(Detection(t, obj.category, score, BBox(float(x), float(y), float(w), float(h))))
        frames.append(dets)
    det_file = DetectionFile(cfg.video_id, float(W), float(H), frames)
    gt = GroundTruth(cfg.video_id, float(W), float(H), cfg.frame_count, objects, relations, negatives)
    return Scene(det_file, gt)


# --- randomized scene layouts ----------------------------------------------

def _pair_layout(rng, frame_count):
    """Two interacting objects: side by side, stacked, or one inside the other.

    Speeds and separations keep every predicate constant over the clip.
    """
    kind = rng.choice(["horizontal", "vertical", "inside"])
    ox, oy = rng.uniform(30, 100), rng.uniform(20, 60)
    if kind == "inside":
        bw, bh = rng.uniform(150, 200), rng.uniform(120, 160)
        sw, sh = rng.uniform(28, 40), rng.uniform(28, 40)
        big = [ox, oy, bw, bh]
        small = [ox + rng.uniform(10, bw - sw - 10), oy + rng.uniform(10, bh - sh - 10), sw, sh]
        v = rng.uniform(-0.3, 0.3, 2) if rng.uniform() < 0.5 else np.zeros(2)
        return [(small, v), (big, v)]

    action = rng.choice(["towards", "away", "still"])
    speed = rng.uniform(0.5, 0.7) if action != "still" else 0.0
    travel = speed * frame_count
    if action == "towards":
        sep = rng.uniform(105, 130) if frame_count > 40 else rng.uniform(70, 130)
        sep = max(sep, travel + 40)
    elif action == "away":
        sep = rng.uniform(45, 65)
    else:
        sep = rng.uniform(55, 120)
    closing = -1.0 if action == "towards" else 1.0
    mover = rng.choice(["first", "second", "both"])
    share = {"first": (1.0, 0.0), "second": (0.0, 1.0), "both": (0.5, 0.5)}[mover]
    size_a = rng.uniform(36, 60, 2)
    size_b = rng.uniform(36, 60, 2)
    lateral = rng.uniform(-8, 8)
    axis = 0 if kind == "horizontal" else 1
    ca = np.array([ox + 40.0, oy + 40.0])
    if action == "away":
        # keep the low-side object off the frame border while it backs away
        ca[axis] = max(ca[axis], travel * share[0] + 35.0)
    cb = ca.copy()
    cb[axis] += sep
    cb[1 - axis] += lateral
    va = np.zeros(2)
    vb = np.zeros(2)
    # the first object sits on the low side: moving it towards the second is +axis
    va[axis] = -closing * speed * share[0]
    vb[axis] = closing * speed * share[1]
    a = [ca[0] - size_a[0] / 2, ca[1] - size_a[1] / 2, *size_a]
    b = [cb[0] - size_b[0] / 2, cb[1] - size_b[1] / 2, *size_b]
    pair = [(a, va), (b, vb)]
    if rng.uniform() < 0.5:
        pair.reverse()
    return pair


def random_scene_config(seed: int, frame_count: int = 96, jitter: float = 2.0, dropout: float = 0.1,
                        n_gaps: int = 0, video_id: Optional[str] = None) -> SynthConfig:
    """One interacting pair on the left, optionally a distant bystander on the right.

    ``n_gaps`` occlusion windows of 1..6 missing frames (detection gaps of
    2..7 frames) are placed at random on every object.
    """
    rng = np.random.default_rng([seed, 7])
    cats = list(rng.choice(CATEGORIES, size=3, replace=False))
    layout = _pair_layout(rng, frame_count)
    specs = []
    for (box, v), cat in zip(layout, cats):
        specs.append(ObjectSpec(str(cat), [float(b) for b in box], [[0, float(v[0]), float(v[1])]]))
    if rng.uniform() < 0.6:
        w, h = rng.uniform(36, 60, 2)
        vy = rng.choice([0.0, rng.uniform(-0.5, 0.5)])
        specs.append(ObjectSpec(str(cats[2]), [float(rng.uniform(520, 570)), float(rng.uniform(120, 200)),
                                               float(w), float(h)], [[0, 0.0, float(vy)]]))
    occlusions = []
    for i in range(len(specs) if n_gaps else 0):
        for _ in range(n_gaps):
            length = int(rng.integers(1, 7))
            b = int(rng.integers(4, frame_count - 4 - length))
            occlusions.append([i, b, b + length])
    return SynthConfig(seed=seed, video_id=video_id or f"synth_{seed:04d}", frame_count=frame_count,
                       objects=specs, jitter=jitter, dropout=dropout, occlusions=occlusions)


def label_for_span(labels: list, vocabulary, min_fraction: float = 0.5) -> int:
    """Class id of the most frequent predicate in ``labels`` (0 if none reaches ``min_fraction``)."""
    if not labels:
        return 0
    counts = {}
    for lab in labels:
        if lab is not None:
            counts[lab] = counts.get(lab, 0) + 1
    if not counts:
        return 0
    best = max(vocabulary, key=lambda p: (counts.get(p, 0), -vocabulary.index(p)))
    if counts.get(best, 0) < min_fraction * len(labels):
        return 0
    return list(vocabulary).index(best) + 1


def relation_dataset(n_pairs: int, seed: int = 0, table=None, clip_length: int = 32,
                     spatial_vocab=SPATIAL_PREDICATES, action_vocab=ACTION_PREDICATES):
    """Labelled pair features from noise-free random clips.

    Every clip has one interacting pair and one distant bystander; all six
    ordered pairs are emitted, so the set contains explicit negatives.
    Pairs whose predicates change within the clip are skipped, so every
    label holds on every frame.
    """
    from .features import CategoryEmbeddingTable, pair_feature
    from .segments import Segment, TrajectoryPair

    table = table or CategoryEmbeddingTable.hashed(CATEGORIES)
    out = []
    k = 0
    seg = Segment(0, clip_length)
    while len(out) < n_pairs:
        cfg = random_scene_config(seed * 1_000_003 + k, frame_count=clip_length, jitter=0.0, dropout=0.0)
        k += 1
        scene = generate_scene(cfg)
        objs = scene.gt.objects
        for s in objs:
            for o in objs:
                if s.tid == o.tid or len(out) >= n_pairs:
                    continue
                sp, ac = frame_predicates(s.track.boxes, o.track.boxes, cfg.near_distance, cfg.speed_threshold)
                if len(set(sp)) > 1 or len(set(ac)) > 1:
                    continue  # predicate changes inside the clip: no clean label
                label = (label_for_span(sp, spatial_vocab), label_for_span(ac, action_vocab))
                pair = TrajectoryPair(s.track, o.track, seg)
                out.append((pair_feature(pair, cfg.frame_size, table), label))
    return out
