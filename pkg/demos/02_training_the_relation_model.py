"""
Training the relation classifier
================================

Pair features from noise-free clips carry clean labels: one spatial
predicate (or none) and one action predicate (or none).  The two-head network
is trained with focal loss and checked on a held-out set.
"""

import time

from vidrel.model import ACTION_PREDICATES, SPATIAL_PREDICATES, TrainConfig, accuracy, train
from vidrel.synth import relation_dataset

# %%
train_set = relation_dataset(2000, seed=0)
held_out = relation_dataset(500, seed=1)

counts = {}
for _, (s, a) in train_set:
    key = (("none",) + SPATIAL_PREDICATES)[s], (("none",) + ACTION_PREDICATES)[a]
    counts[key] = counts.get(key, 0) + 1
for key, n in sorted(counts.items(), key=lambda kv: -kv[1]):
    print(f"{key[0]:>9} / {key[1]:<8} {n}")

# %%
t0 = time.perf_counter()
model, trace = train(train_set, TrainConfig(epochs=20))
print(f"trained in {time.perf_counter() - t0:.1f}s")
print("loss per epoch:", " ".join(f"{x:.4f}" for x in trace))

# %%
spatial_acc, action_acc = accuracy(model, held_out)
print(f"held-out accuracy: spatial {spatial_acc:.3f}, action {action_acc:.3f}")
