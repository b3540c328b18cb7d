"""
End to end on synthetic videos
==============================

Train on featurized scenes, then run segment tracking, pair prediction and
greedy merging on unseen scenes and score the result.
"""

from vidrel.evaluation import evaluate
from vidrel.model import TrainConfig, train
from vidrel.pipeline import PipelineConfig, cap_negatives, default_table, featurize_scene, run_many, track_video
from vidrel.synth import CATEGORIES, generate_scene, random_scene_config

table = default_table(CATEGORIES)

# %%
# Training samples come from the tracker's own output, labelled by matching
# trajectories back to the ground truth.
samples = []
for seed in range(1000, 1060):
    scene = generate_scene(random_scene_config(seed))
    samples += featurize_scene(scene.detections, scene.gt, table)[0]
samples, _ = cap_negatives(samples, None, ratio=3.0, seed=0)
print(len(samples), "training samples")
model, _ = train(samples, TrainConfig())

# %%
test = [generate_scene(random_scene_config(seed)) for seed in range(20)]
dets = [s.detections for s in test]
cfg = PipelineConfig()
preds = run_many(dets, model, cfg, table, workers=4)
report = evaluate(
    preds,
    {s.gt.video_id: s.gt.relation_instances() for s in test},
    pred_tracks={d.video_id: track_video(d, cfg.link) for d in dets},
    gt_tracks={s.gt.video_id: s.gt.tracks() for s in test},
)
for name, value in report.metrics.items():
    print(f"{name:>15}: {value:.3f}")

# %%
# The highest-scoring relations of the first video against its ground truth.
first = test[0].gt
print("ground truth:")
for r in first.relation_instances():
    print("  ", r.triplet, r.span)
print("predicted:")
for r in sorted(preds[first.video_id], key=lambda r: -r.score)[:6]:
    print("  ", r.triplet, r.span, round(r.score, 3))
