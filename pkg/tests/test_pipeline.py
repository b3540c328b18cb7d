import pytest

from vidrel.formats import DetectionFile
from vidrel.model import ModelConfig, RelationModel
from vidrel.pipeline import (
    PipelineConfig,
    PipelineError,
    cap_negatives,
    default_table,
    featurize_scene,
    run_many,
    run_pipeline,
    track_video,
)
from vidrel.synth import CATEGORIES, ObjectSpec, SynthConfig, generate_scene, random_scene_config
from vidrel.tracking import LinkConfig

SMALL = ModelConfig(branch_widths={"language": 8, "motion": 8, "mask": 8, "visual": 8}, trunk_width=16)


def scenes(seeds, **kw):
    return [generate_scene(random_scene_config(s, **kw)) for s in seeds]


def test_run_many_independent_of_workers():
    dets = [s.detections for s in scenes(range(4))]
    model = RelationModel(SMALL)
    cfg = PipelineConfig(min_prob=0.0)
    one = run_many(dets, model, cfg, workers=1)
    four = run_many(dets, model, cfg, workers=4)
    assert one == four
    assert sum(len(v) for v in one.values()) > 0


def test_run_pipeline_outputs_are_video_scoped():
    det = scenes([2])[0].detections
    out = run_pipeline(det, RelationModel(SMALL), PipelineConfig(min_prob=0.0))
    for r in out:
        assert r.subject.span[0] <= r.span[0] and r.span[1] <= r.subject.span[1]
        assert 0 <= r.span[0] < r.span[1] <= det.frame_count


def test_unknown_category_wrapped_with_context():
    det = scenes([2])[0].detections
    with pytest.raises(PipelineError, match="segment"):
        run_pipeline(det, RelationModel(SMALL), PipelineConfig(), default_table(["nothing"]))


def test_featurize_labels_follow_ground_truth():
    s = scenes([6], jitter=0.0, dropout=0.0)[0]
    samples, metas = featurize_scene(s.detections, s.gt, default_table(CATEGORIES))
    assert len(samples) == len(metas) > 0
    positives = [m for (f, lab), m in zip(samples, metas) if lab != (0, 0)]
    rel_pairs = {(r.subject_tid, r.object_tid) for r in s.gt.relations}
    assert positives
    assert all((m["subject_tid"], m["object_tid"]) in rel_pairs for m in positives)


def test_cap_negatives():
    samples = [(None, (1, 0))] * 2 + [(None, (0, 0))] * 20
    kept, _ = cap_negatives(samples, None, ratio=3.0, seed=0)
    assert sum(lab == (0, 0) for _, lab in kept) == 6
    assert sum(lab != (0, 0) for _, lab in kept) == 2
    assert cap_negatives(samples, None, 3.0, 0) == (kept, None)


def test_track_video_cflm_switch():
    s = scenes([5000], n_gaps=2, dropout=0.0, jitter=0.0)[0]
    with_cflm = track_video(s.detections, LinkConfig())
    without = track_video(s.detections, LinkConfig(use_cflm=False))
    assert len(with_cflm) < len(without)


def test_empty_and_single_object_videos():
    model = RelationModel(SMALL)
    empty = DetectionFile("e", 640.0, 360.0, [])
    assert run_pipeline(empty, model, PipelineConfig(min_prob=0.0), default_table(["dog"])) == []
    lone = generate_scene(SynthConfig(frame_count=50, objects=[ObjectSpec("dog", [10, 10, 30, 30])])).detections
    assert run_pipeline(lone, model, PipelineConfig(min_prob=0.0)) == []
