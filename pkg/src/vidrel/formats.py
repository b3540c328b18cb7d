"""JSON file formats: detections, ground truth, trajectories, predictions, training samples.

Boxes are ``[x, y, w, h]`` in pixels throughout.  Every reader raises
``FormatError`` carrying the file name and, for JSON syntax errors, the
character offset.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import VISUAL_DIM, PairFeature, _ZERO_VISUAL
from .geometry import BBox, BoxedTrack, Detection, check_bbox
from .relations import RelationInstance

log = logging.getLogger(__name__)

PREDICTION_VERSION = "vidrel-predictions-1"


class FormatError(ValueError):
    def __init__(self, message, path=None, offset=None):
        super().__init__(message)
        self.path = str(path) if path is not None else None
        self.offset = offset

    def record(self) -> dict:
        return {"error": "input", "message": str(self), "file": self.path, "offset": self.offset}


def read_json(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}", path) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}",
                          path, e.pos) from e


def write_json(obj, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def _require(d, key, path, where):
    if not isinstance(d, dict) or key not in d:
        raise FormatError(f"{path}: {where} lacks required field {key!r}", path)
    return d[key]


# --- detections -------------------------------------------------------------

@dataclass
class DetectionFile:
    video_id: str
    width: float
    height: float
    frames: list  # frames[t] -> list[Detection]

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def frame_size(self) -> tuple[float, float]:
        return (self.width, self.height)

    def categories(self) -> set:
        return {d.category for dets in self.frames for d in dets}

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
            "frames": [
                {"frame_index": t,
                 "detections": [{"category": d.category, "score": d.score, "bbox": list(d.bbox)}
                                for d in dets]}
                for t, dets in enumerate(self.frames)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, path="<detections>") -> "DetectionFile":
        vid = str(_require(d, "video_id", path, "detection file"))
        width = float(_require(d, "width", path, "detection file"))
        height = float(_require(d, "height", path, "detection file"))
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: frame size must be positive", path)
        raw_frames = _require(d, "frames", path, "detection file")
        last = -1
        parsed = {}
        for k, fr in enumerate(raw_frames):
            t = _require(fr, "frame_index", path, f"frames[{k}]")
            if not isinstance(t, int) or t <= last:
                raise FormatError(f"{path}: frames[{k}].frame_index must be an integer above {last}", path)
            last = t
            dets = []
            for m, rd in enumerate(_require(fr, "detections", path, f"frames[{k}]")):
                where = f"frames[{k}].detections[{m}]"
                score = float(_require(rd, "score", path, where))
                if not 0.0 < score <= 1.0:
                    raise FormatError(f"{path}: {where}.score {score} outside (0, 1]", path)
                try:
                    box = check_bbox(_require(rd, "bbox", path, where))
                except (ValueError, TypeError) as e:
                    raise FormatError(f"{path}: {where}: {e}", path) from e
                box = clamp_to_frame(box, width, height)
                if box is None:
                    log.warning("%s: %s lies outside the frame, dropped", path, where)
                    continue
                dets.append(Detection(t, str(_require(rd, "category", path, where)), score, box))
            parsed[t] = dets
        count = int(d.get("frame_count", last + 1))
        if count <= last:
            raise FormatError(f"{path}: frame_count {count} does not cover frame {last}", path)
        return cls(vid, width, height, [parsed.get(t, []) for t in range(count)])

    def save(self, path) -> None:
        write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "DetectionFile":
        return cls.from_dict(read_json(path), path)


def clamp_to_frame(box: BBox, width: float, height: float) -> Optional[BBox]:
    if box.x >= 0 and box.y >= 0 and box.x + box.w <= width and box.y + box.h <= height:
        return box
    x1, y1 = max(box.x, 0.0), max(box.y, 0.0)
    x2, y2 = min(box.x + box.w, width), min(box.y + box.h, height)
    if x2 <= x1 or y2 <= y1:
        return None
    return BBox(x1, y1, x2 - x1, y2 - y1)


# --- tracks -----------------------------------------------------------------

def track_to_dict(t: BoxedTrack) -> dict:
    return {
        "category": t.category,
        "start_frame": t.start_frame,
        "boxes": t.boxes.tolist(),
        "node_scores": t.node_scores.tolist(),
        "interpolated": t.interpolated.tolist(),
        "score": t.score,
        "confidence": t.confidence,
    }


def track_from_dict(d: dict, path="<tracks>") -> BoxedTrack:
    try:
        return BoxedTrack(
            str(d["category"]),
            int(d["start_frame"]),
            np.asarray(d["boxes"], dtype=float),
            d.get("node_scores"),
            d.get("interpolated"),
            d.get("score"),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise FormatError(f"{path}: bad trajectory record ({e})", path) from e


def save_tracks(tracks: dict, path) -> None:
    """``tracks`` maps video id -> list of BoxedTrack."""
    write_json({"videos": {v: [track_to_dict(t) for t in ts] for v, ts in sorted(tracks.items())}}, path)


def load_tracks(path) -> dict:
    d = read_json(path)
    vids = _require(d, "videos", path, "trajectory file")
    return {v: [track_from_dict(t, path) for t in ts] for v, ts in vids.items()}


# --- ground truth -----------------------------------------------------------

@dataclass
class GTObject:
    tid: int
    track: BoxedTrack
    clamped: bool = False

    @property
    def category(self) -> str:
        return self.track.category


@dataclass
class GTRelation:
    subject_tid: int
    predicate: str
    object_tid: int
    begin: int
    end: int


@dataclass
class GroundTruth:
    video_id: str
    width: float
    height: float
    frame_count: int
    objects: list = field(default_factory=list)
    relations: list = field(default_factory=list)
    negatives: list = field(default_factory=list)  # [subject_tid, object_tid] pairs with no relation

    def object(self, tid: int) -> GTObject:
        for o in self.objects:
            if o.tid == tid:
                return o
        raise KeyError(tid)

    def relation_instances(self) -> list[RelationInstance]:
        out = []
        for r in self.relations:
            s = self.object(r.subject_tid).track.clip(r.begin, r.end)
            o = self.object(r.object_tid).track.clip(r.begin, r.end)
            if s is None or o is None:
                raise ValueError(f"relation {r} falls outside its trajectories")
            out.append(RelationInstance(s, r.predicate, o, 1.0, (r.begin, r.end)))
        return out

    def tracks(self) -> list[BoxedTrack]:
        return [o.track for o in self.objects]

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
            "objects": [{"tid": o.tid, "category": o.category, "start_frame": o.track.start_frame,
                         "boxes": o.track.boxes.tolist(), "clamped": o.clamped} for o in self.objects],
            "relations": [{"subject_tid": r.subject_tid, "predicate": r.predicate,
                           "object_tid": r.object_tid, "begin": r.begin, "end": r.end}
                          for r in self.relations],
            "negatives": [list(p) for p in self.negatives],
        }

    @classmethod
    def from_dict(cls, d: dict, path="<gt>") -> "GroundTruth":
        try:
            objs = [GTObject(int(o["tid"]), BoxedTrack(str(o["category"]), int(o["start_frame"]),
                                                        np.asarray(o["boxes"], dtype=float)),
                             bool(o.get("clamped", False)))
                    for o in d["objects"]]
            rels = [GTRelation(int(r["subject_tid"]), str(r["predicate"]), int(r["object_tid"]),
                               int(r["begin"]), int(r["end"])) for r in d["relations"]]
            return cls(str(d["video_id"]), float(d["width"]), float(d["height"]), int(d["frame_count"]),
                       objs, rels, [list(map(int, p)) for p in d.get("negatives", [])])
        except (KeyError, ValueError, TypeError) as e:
            raise FormatError(f"{path}: bad ground-truth document ({e})", path) from e

    def save(self, path) -> None:
        write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_dict(read_json(path), path)


# --- predictions ------------------------------------------------------------

def instance_to_dict(r: RelationInstance) -> dict:
    return {
        "triplet": list(r.triplet),
        "score": r.score,
        "duration": list(r.span),
        "sub_traj": r.subject.boxes.tolist(),
        "obj_traj": r.object.boxes.tolist(),
        "sub_start": r.subject.start_frame,
        "obj_start": r.object.start_frame,
        "sub_node_scores": r.subject.node_scores.tolist(),
        "obj_node_scores": r.object.node_scores.tolist(),
        "sub_interpolated": r.subject.interpolated.tolist(),
        "obj_interpolated": r.object.interpolated.tolist(),
    }


def instance_from_dict(d: dict, path="<predictions>") -> RelationInstance:
    try:
        sc, pred, oc = d["triplet"]
        b, e = (int(v) for v in d["duration"])
        sub = BoxedTrack(sc, int(d.get("sub_start", b)), np.asarray(d["sub_traj"], dtype=float),
                         d.get("sub_node_scores"), d.get("sub_interpolated"))
        obj = BoxedTrack(oc, int(d.get("obj_start", b)), np.asarray(d["obj_traj"], dtype=float),
                         d.get("obj_node_scores"), d.get("obj_interpolated"))
        return RelationInstance(sub, str(pred), obj, float(d["score"]), (b, e))
    except (KeyError, ValueError, TypeError) as e:
        raise FormatError(f"{path}: bad prediction record ({e})", path) from e


def save_predictions(results: dict, path) -> None:
    write_json({"version": PREDICTION_VERSION,
                "results": {v: [instance_to_dict(r) for r in rs] for v, rs in sorted(results.items())}},
               path)


def load_predictions(path) -> dict:
    d = read_json(path)
    res = _require(d, "results", path, "prediction file")
    return {v: [instance_from_dict(r, path) for r in rs] for v, rs in res.items()}


# --- training samples -------------------------------------------------------

def sample_to_dict(feat: PairFeature, label, meta: dict = None) -> dict:
    visual = feat.visual
    return {
        **(meta or {}),
        "label": [int(label[0]), int(label[1])],
        "motion": feat.motion.tolist(),
        "mask_bits": np.packbits(feat.mask.reshape(-1).astype(np.uint8)).tobytes().hex(),
        "language": feat.language.tolist(),
        "visual": None if not visual.any() else visual.tolist(),
    }


def sample_from_dict(d: dict):
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(d["mask_bits"]), dtype=np.uint8))
    visual = _ZERO_VISUAL if d.get("visual") is None else np.asarray(d["visual"], dtype=float).reshape(3, VISUAL_DIM)
    feat = PairFeature(
        motion=np.asarray(d["motion"], dtype=float),
        mask=bits.reshape(2, 32, 32),
        language=np.asarray(d["language"], dtype=float),
        visual=visual,
    )
    return feat, tuple(d["label"])


def save_samples(samples, path, metas=None) -> None:
    """JSON lines, one ``(PairFeature, (spatial, action))`` sample per line."""
    with open(path, "w") as f:
        for i, (feat, label) in enumerate(samples):
            meta = metas[i] if metas else None
            f.write(json.dumps(sample_to_dict(feat, label, meta), sort_keys=True))
            f.write("\n")


def load_samples(path) -> list:
    out = []
    try:
        fh = open(path)
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}", path) from e
    with fh:
        offset = 0
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(sample_from_dict(json.loads(line)))
                except json.JSONDecodeError as e:
                    raise FormatError(f"{path}:{lineno}: malformed JSON: {e.msg}", path, offset + e.pos) from e
                except (KeyError, ValueError, TypeError) as e:
                    raise FormatError(f"{path}:{lineno}: bad sample record ({e})", path, offset) from e
            offset += len(line)
    return out
