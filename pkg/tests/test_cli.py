import json
from pathlib import Path

import pytest

from vidrel import formats
from vidrel.cli import main, parse_seeds
from vidrel.formats import GroundTruth, GTObject, GTRelation

from toy import eval_fixture

FIXTURES = Path(__file__).parent / "fixtures"
OCCLUSION = str(FIXTURES / "occlusion.detections.json")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_seeds():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,4,6-7") == [1, 4, 6, 7]
    assert parse_seeds(5) == [5]
    assert parse_seeds([2, 3]) == [2, 3]


def test_track_occlusion_fixture(tmp_path, capsys):
    code, out, _ = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json")
    assert code == 0
    assert json.loads(out)["trajectories"] == {"occlusion": 1}
    assert [len(t) for t in formats.load_tracks(tmp_path / "t.json")["occlusion"]] == [24]
    code, out, _ = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--no-cflm")
    assert json.loads(out)["trajectories"] == {"occlusion": 2}


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"use_cflm": False}))
    _, out, _ = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--config", cfg)
    assert json.loads(out)["trajectories"] == {"occlusion": 2}
    _, out, _ = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--config", cfg, "--cflm")
    assert json.loads(out)["trajectories"] == {"occlusion": 1}
    # a gap of 3 missing frames is a 4-frame gap: max_gap 3 forbids it
    _, out, _ = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--max-gap", 3)
    assert json.loads(out)["trajectories"] == {"occlusion": 2}


def test_config_errors_exit_3(tmp_path, capsys):
    code, _, err = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--bogus")
    assert code == 3 and json.loads(err)["error"] == "config"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"no_such_option": 1}))
    code, _, err = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--config", cfg)
    assert code == 3 and "no_such_option" in json.loads(err)["message"]
    code, _, _ = run(capsys, "track", OCCLUSION, "--out", tmp_path / "t.json", "--max-gap", 0)
    assert code == 3


def test_input_errors_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "track", tmp_path / "missing.json", "--out", tmp_path / "t.json")
    rec = json.loads(err)
    assert code == 2 and rec["file"].endswith("missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"video_id": ')
    code, _, err = run(capsys, "track", bad, "--out", tmp_path / "t.json")
    assert code == 2 and json.loads(err)["offset"] == 13


def test_synth_then_evaluate_perfect_predictions(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "scenes", "--seeds", "3-4")
    assert code == 0 and json.loads(out)["videos"] == ["synth_0003", "synth_0004"]
    gts = [GroundTruth.load(p) for p in sorted((tmp_path / "scenes").glob("*.gt.json"))]
    formats.save_predictions({g.video_id: g.relation_instances() for g in gts}, tmp_path / "p.json")
    code, out, _ = run(capsys, "evaluate", "--pred", tmp_path / "p.json", "--gt", tmp_path / "scenes",
                       "--out", tmp_path / "r.json")
    assert code == 0
    metrics = json.loads(out)
    assert metrics["mAP"] == 1.0 and metrics["tagging_P@1"] == 1.0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["diagnostics"]["unmatched_gt"] == 0


def test_featurize_train_predict(tmp_path, capsys):
    scenes = tmp_path / "scenes"
    assert run(capsys, "synth", "--out", scenes, "--seeds", "1000-1003")[0] == 0
    code, out, _ = run(capsys, "featurize", "--detections", scenes, "--gt", scenes, "--out", tmp_path / "s.jsonl")
    assert code == 0 and json.loads(out)["positives"] > 0
    code, out, _ = run(capsys, "train", tmp_path / "s.jsonl", "--out", tmp_path / "m.json", "--epochs", 2)
    assert code == 0 and len(json.loads(out)["loss_trace"]) == 2
    code, out, _ = run(capsys, "predict", scenes, "--model", tmp_path / "m.json", "--out", tmp_path / "p.json",
                       "--workers", 2)
    assert code == 0
    preds = formats.load_predictions(tmp_path / "p.json")
    assert sorted(preds) == ["synth_1000", "synth_1001", "synth_1002", "synth_1003"]


def test_featurize_without_matching_gt(tmp_path, capsys):
    code, _, err = run(capsys, "featurize", "--detections", OCCLUSION, "--gt", FIXTURES / "occlusion.gt.json",
                       tmp_path / "missing.gt.json", "--out", tmp_path / "s.jsonl")
    assert code == 2


@pytest.mark.slow
def test_pipeline_command(tmp_path, capsys):
    code, out, _ = run(capsys, "pipeline", "--out", tmp_path / "run", "--train-seeds", "1000-1009",
                       "--seeds", "0-2", "--epochs", 3)
    assert code == 0
    metrics = json.loads(out)
    assert set(metrics) >= {"mAP", "R@50", "R@100", "tagging_P@1", "trajectory_mAP"}
    for name in ("model.json", "samples.jsonl", "predictions.json", "tracks.json", "report.json"):
        assert (tmp_path / "run" / name).exists()


def toy_ground_truth_files(tmp_path):
    """Write the toy evaluation fixture as GT files; returns the expected metrics."""
    preds, gts, _, _, exp = eval_fixture()
    paths = []
    for vid, rels in gts.items():
        tracks = []
        for r in rels:
            for t in (r.subject, r.object):
                if not any(t is u for u in tracks):
                    tracks.append(t)
        objects = [GTObject(i, t) for i, t in enumerate(tracks)]
        idx = {id(t): i for i, t in enumerate(tracks)}
        relations = [GTRelation(idx[id(r.subject)], r.predicate, idx[id(r.object)], *r.span) for r in rels]
        gt = GroundTruth(vid, 640.0, 360.0, 30, objects, relations)
        paths.append(tmp_path / f"{vid}.gt.json")
        gt.save(paths[-1])
    formats.save_predictions(preds, tmp_path / "toy_pred.json")
    return paths, exp


def test_evaluate_toy_fixture_goldens(tmp_path, capsys):
    paths, exp = toy_ground_truth_files(tmp_path)
    code, out, _ = run(capsys, "evaluate", "--pred", tmp_path / "toy_pred.json", "--gt", *paths,
                       "--out", tmp_path / "r.json")
    assert code == 0
    metrics = json.loads(out)
    for k in ("mAP", "R@50", "R@100", "tagging_P@1", "tagging_P@5", "tagging_P@10"):
        assert metrics[k] == pytest.approx(exp[k], abs=1e-15), k
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["diagnostics"]["videos_without_gt"] == ["v3"]


@pytest.mark.slow
def test_pipeline_reruns_are_byte_identical(tmp_path, capsys):
    args = ["--train-seeds", "1000-1005", "--seeds", "0-3", "--epochs", 2]
    assert run(capsys, "pipeline", "--out", tmp_path / "a", *args)[0] == 0
    assert run(capsys, "pipeline", "--out", tmp_path / "b", *args, "--workers", 3)[0] == 0
    for name in ("model.json", "samples.jsonl", "predictions.json", "tracks.json", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
