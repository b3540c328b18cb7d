"""Command line front end.

Every subcommand accepts ``--config FILE`` (a flat JSON object of option
values) plus flags; precedence is defaults < config file < flags.  Outputs
are JSON.  On failure a JSON error record goes to stderr and the exit status
is 2 for bad input, 3 for bad configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import formats
from .evaluation import evaluate
from .features import CategoryEmbeddingTable, VisualFeatureStore
from .formats import DetectionFile, FormatError, GroundTruth
from .model import ConfigError, FocalLossConfig, ModelConfig, RelationModel, TrainConfig, train
from .pipeline import (
    PipelineConfig,
    PipelineError,
    cap_negatives,
    default_table,
    featurize_scene,
    run_many,
    track_video,
)
from .synth import CATEGORIES, SynthConfig, generate_scene, random_scene_config
from .tracking import LinkConfig

log = logging.getLogger("vidrel")

EXIT_INPUT = 2
EXIT_CONFIG = 3

DEFAULTS = {
    # tracking
    "iou_threshold": 0.2, "max_gap": 7, "ratio_gate": 2.0, "max_candidates_per_endpoint": 5,
    "min_traj_score": 0.3, "min_traj_length": 2, "use_cflm": True,
    # segments, prediction, merging
    "segment_length": 32, "segment_stride": 16, "min_pair_overlap": 8, "require_middle": True,
    "top_k": 3, "min_prob": 0.05, "merge_viou": 0.5, "min_det_score": 0.01,
    # training
    "epochs": 20, "lr": 1e-3, "batch_size": 64, "seed": 0, "gamma": 2.0, "alpha": 0.25,
    "neg_ratio": 3.0,
    # synthetic scenes
    "seeds": "0-19", "train_seeds": "1000-1099", "frame_count": 96, "jitter": 2.0, "dropout": 0.1,
    "n_gaps": 0, "scene": None,
    # evaluation and io
    "viou_threshold": 0.5, "embeddings": None, "visual": None, "workers": 1,
}

LINK_KEYS = ("iou_threshold", "max_gap", "ratio_gate", "max_candidates_per_endpoint",
             "min_traj_score", "min_traj_length", "use_cflm")
PIPE_KEYS = ("segment_length", "segment_stride", "min_pair_overlap", "require_middle",
             "top_k", "min_prob", "merge_viou", "min_det_score")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_seeds(spec) -> list[int]:
    """``"0-19"``, ``"3,5,8"``, an int or a list of ints."""
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, list):
        return [int(s) for s in spec]
    out = []
    for part in str(spec).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def load_options(args) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg = formats.read_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        unknown = sorted(set(cfg) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"{args.config}: unknown option(s) {', '.join(unknown)}")
        opts.update(cfg)
    for key in DEFAULTS:
        if hasattr(args, key):
            opts[key] = getattr(args, key)
    log.info("effective options: %s", json.dumps({k: opts[k] for k in sorted(opts)}, default=str))
    return opts


def link_config(opts) -> LinkConfig:
    try:
        return LinkConfig(**{k: opts[k] for k in LINK_KEYS})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def pipeline_config(opts) -> PipelineConfig:
    return PipelineConfig(link=link_config(opts), **{k: opts[k] for k in PIPE_KEYS})


def train_config(opts) -> TrainConfig:
    try:
        return TrainConfig(lr=float(opts["lr"]), batch_size=int(opts["batch_size"]),
                           epochs=int(opts["epochs"]), seed=int(opts["seed"]),
                           focal=FocalLossConfig(float(opts["gamma"]), float(opts["alpha"])))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _expand(paths, suffix) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob(f"*{suffix}")))
        else:
            out.append(p)
    return out


def _load_dets(paths) -> list[DetectionFile]:
    return [DetectionFile.load(p) for p in _expand(paths, ".detections.json")]


def _load_gts(paths) -> list[GroundTruth]:
    return [GroundTruth.load(p) for p in _expand(paths, ".gt.json")]


def _table(opts, *category_sets) -> CategoryEmbeddingTable:
    if opts["embeddings"]:
        return CategoryEmbeddingTable.load(opts["embeddings"])
    return default_table(CATEGORIES, *category_sets)


def _store(opts):
    return VisualFeatureStore.load(opts["visual"]) if opts["visual"] else None


# --- subcommands ------------------------------------------------------------

def write_scenes(opts, out_dir: Path, seeds) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = []
    if opts["scene"] is not None:
        configs = [SynthConfig(**opts["scene"])]
    else:
        configs = [random_scene_config(s, frame_count=int(opts["frame_count"]), jitter=float(opts["jitter"]),
                                       dropout=float(opts["dropout"]), n_gaps=int(opts["n_gaps"]))
                   for s in seeds]
    for cfg in configs:
        scene = generate_scene(cfg)
        scene.detections.save(out_dir / f"{cfg.video_id}.detections.json")
        scene.gt.save(out_dir / f"{cfg.video_id}.gt.json")
        scenes.append(scene)
    return scenes


def cmd_synth(args, opts):
    scenes = write_scenes(opts, Path(args.out), parse_seeds(opts["seeds"]))
    return {"videos": [s.gt.video_id for s in scenes], "out": args.out}


def cmd_track(args, opts):
    link = link_config(opts)
    dets = _load_dets(args.detections)
    tracks = {d.video_id: track_video(d, link, opts["min_det_score"]) for d in dets}
    formats.save_tracks(tracks, args.out)
    return {"videos": len(tracks), "trajectories": {v: len(t) for v, t in tracks.items()}}


def _featurize(opts, dets, gts):
    by_vid = {g.video_id: g for g in gts}
    table = _table(opts, *(d.categories() for d in dets), *({o.category for o in g.objects} for g in gts))
    store = _store(opts)
    cfg = pipeline_config(opts)
    samples, metas = [], []
    for d in dets:
        if d.video_id not in by_vid:
            raise FormatError(f"no ground truth for video {d.video_id}")
        s, m = featurize_scene(d, by_vid[d.video_id], table, cfg, store=store)
        samples += s
        metas += m
    return cap_negatives(samples, metas, float(opts["neg_ratio"]), int(opts["seed"]))


def cmd_featurize(args, opts):
    samples, metas = _featurize(opts, _load_dets(args.detections), _load_gts(args.gt))
    formats.save_samples(samples, args.out, metas)
    return {"samples": len(samples), "positives": sum(s[1] != (0, 0) for s in samples)}


def cmd_train(args, opts):
    samples = []
    for p in args.samples:
        samples += formats.load_samples(p)
    if not samples:
        raise FormatError("no training samples found", args.samples[0])
    model, trace = train(samples, train_config(opts), ModelConfig())
    model.save(args.out)
    return {"samples": len(samples), "loss_trace": trace, "checkpoint": args.out}


def cmd_predict(args, opts):
    dets = _load_dets(args.detections)
    model = RelationModel.load(args.model)
    table = _table(opts, *(d.categories() for d in dets))
    preds = run_many(dets, model, pipeline_config(opts), table, _store(opts), int(opts["workers"]))
    formats.save_predictions(preds, args.out)
    return {"videos": len(preds), "relations": {v: len(r) for v, r in preds.items()}}


def cmd_evaluate(args, opts):
    preds = formats.load_predictions(args.pred)
    gts = _load_gts(args.gt)
    gt_map = {g.video_id: g.relation_instances() for g in gts}
    kwargs = {}
    if args.tracks:
        kwargs = {"pred_tracks": formats.load_tracks(args.tracks),
                  "gt_tracks": {g.video_id: g.tracks() for g in gts}}
    report = evaluate(preds, gt_map, float(opts["viou_threshold"]), **kwargs)
    formats.write_json(report.to_dict(), args.out)
    return report.metrics


def cmd_pipeline(args, opts):
    out = Path(args.out)
    train_scenes = write_scenes(opts, out / "train", parse_seeds(opts["train_seeds"]))
    test_scenes = write_scenes(opts, out / "test", parse_seeds(opts["seeds"]))
    samples, metas = _featurize(opts, [s.detections for s in train_scenes], [s.gt for s in train_scenes])
    formats.save_samples(samples, out / "samples.jsonl", metas)
    model, trace = train(samples, train_config(opts), ModelConfig())
    model.save(out / "model.json")
    dets = [s.detections for s in test_scenes]
    table = _table(opts, *(d.categories() for d in dets))
    cfg = pipeline_config(opts)
    preds = run_many(dets, model, cfg, table, _store(opts), int(opts["workers"]))
    formats.save_predictions(preds, out / "predictions.json")
    tracks = {d.video_id: track_video(d, cfg.link, cfg.min_det_score) for d in dets}
    formats.save_tracks(tracks, out / "tracks.json")
    report = evaluate(preds, {s.gt.video_id: s.gt.relation_instances() for s in test_scenes},
                      float(opts["viou_threshold"]), tracks, {s.gt.video_id: s.gt.tracks() for s in test_scenes})
    formats.write_json(report.to_dict(), out / "report.json")
    formats.write_json({"loss_trace": trace}, out / "train_log.json")
    return report.metrics


def _bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s}")


def _add_options(p, keys):
    S = argparse.SUPPRESS
    types = {bool: _bool, int: int, float: float}
    for key in keys:
        default = DEFAULTS[key]
        flag = "--" + key.replace("_", "-")
        if key == "use_cflm":
            p.add_argument("--no-cflm", dest="use_cflm", action="store_false", default=S,
                           help="disable cross-frame linking")
            p.add_argument("--cflm", dest="use_cflm", action="store_true", default=S)
            continue
        typ = types.get(type(default), str)
        p.add_argument(flag, dest=key, type=typ, default=S, help=f"(default: {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vidrel", description="Video relation detection on detection files.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help, keys):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file with option values")
        _add_options(p, keys)
        p.set_defaults(func=func)
        return p

    synth_keys = ("seeds", "frame_count", "jitter", "dropout", "n_gaps")
    p = command("synth", cmd_synth, "write synthetic detection and ground-truth files", synth_keys)
    p.add_argument("--out", required=True, help="output directory")

    p = command("track", cmd_track, "link detections into trajectories", LINK_KEYS + ("min_det_score",))
    p.add_argument("detections", nargs="+")
    p.add_argument("--out", required=True)

    feat_keys = LINK_KEYS + PIPE_KEYS + ("neg_ratio", "seed", "embeddings", "visual")
    p = command("featurize", cmd_featurize, "build labelled pair samples", feat_keys)
    p.add_argument("--detections", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = command("train", cmd_train, "train the relation model",
                ("epochs", "lr", "batch_size", "seed", "gamma", "alpha"))
    p.add_argument("samples", nargs="+")
    p.add_argument("--out", required=True)

    p = command("predict", cmd_predict, "detect relations",
                LINK_KEYS + PIPE_KEYS + ("embeddings", "visual", "workers"))
    p.add_argument("detections", nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = command("evaluate", cmd_evaluate, "score predictions against ground truth", ("viou_threshold",))
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--tracks", help="trajectory file for trajectory mAP")
    p.add_argument("--out", required=True)

    p = command("pipeline", cmd_pipeline, "synth, featurize, train, predict and evaluate in one go",
                tuple(DEFAULTS))
    p.add_argument("--out", required=True)
    return parser


def _fail(record: dict, code: int) -> int:
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as e:
        return _fail({"error": "config", "message": str(e)}, EXIT_CONFIG)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = load_options(args)
        summary = args.func(args, opts)
    except FormatError as e:
        return _fail(e.record(), EXIT_INPUT)
    except ConfigError as e:
        return _fail({"error": "config", "message": str(e)}, EXIT_CONFIG)
    except (PipelineError, ValueError, KeyError) as e:
        return _fail({"error": "input", "message": str(e)}, EXIT_INPUT)
    print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
