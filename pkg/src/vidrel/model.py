"""Two-head relation classifier in plain numpy.

Each feature family goes through its own affine + ReLU encoder, the
encodings are concatenated and passed through a shared affine + ReLU trunk,
and two softmax heads predict one spatial and one action class.  Class 0 of
each head means "no relation of this kind".  Both heads are trained with
focal loss.
"""
from __future__ import annotations

import base64
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .features import EMBED_DIM, MASK_RES, MOTION_DIM, VISUAL_DIM, PairFeature
from .relations import RelationInstance
from .segments import TrajectoryPair

log = logging.getLogger(__name__)

SPATIAL_PREDICATES = ("left_of", "right_of", "above", "below", "inside")
ACTION_PREDICATES = ("towards", "away")

# name -> input width; concatenation order of the trunk input
BRANCH_INPUTS = {
    "language": 2 * EMBED_DIM,
    "motion": MOTION_DIM,
    "mask": 2 * MASK_RES * MASK_RES,
    "visual": 3 * VISUAL_DIM,
}
PROB_EPS = 1e-12


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    spatial_predicates: list = field(default_factory=lambda: list(SPATIAL_PREDICATES))
    action_predicates: list = field(default_factory=lambda: list(ACTION_PREDICATES))
    branch_widths: dict = field(default_factory=lambda: {
        "language": 128, "motion": 128, "mask": 128, "visual": 256})
    trunk_width: int = 256
    seed: int = 0

    @property
    def n_spatial(self) -> int:
        return len(self.spatial_predicates) + 1

    @property
    def n_action(self) -> int:
        return len(self.action_predicates) + 1


@dataclass
class FocalLossConfig:
    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("focal gamma must be >= 0")
        if not 0 < self.alpha <= 1:
            raise ConfigError("focal alpha must lie in (0, 1]")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    focal: FocalLossConfig = field(default_factory=FocalLossConfig)


def focal_loss(probs, target: int, cfg: FocalLossConfig = None) -> float:
    """``-alpha * (1 - p_t)**gamma * ln(p_t)`` with ``p_t`` clamped at 1e-12."""
    cfg = cfg or FocalLossConfig()
    p = max(float(probs[target]), PROB_EPS)
    return -cfg.alpha * (1.0 - p) ** cfg.gamma * np.log(p)


def _focal_batch(probs: np.ndarray, targets: np.ndarray, cfg: FocalLossConfig):
    """Per-sample losses and d(loss)/d(logits) for a softmax head."""
    n = len(targets)
    p = np.maximum(probs[np.arange(n), targets], PROB_EPS)
    q = 1.0 - p
    losses = -cfg.alpha * q ** cfg.gamma * np.log(p)
    # p * dL/dp; the gamma term vanishes as q -> 0 for every gamma >= 0
    if cfg.gamma == 0:
        focus = 0.0
    else:
        safe_q = np.where(q > 0, q, 1.0)
        focus = np.where(q > 0, cfg.gamma * p * safe_q ** (cfg.gamma - 1) * np.log(p), 0.0)
    g = -cfg.alpha * (q ** cfg.gamma - focus)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), targets] = 1.0
    dlogits = g[:, None] * (onehot - probs)
    return losses, dlogits


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def stack_features(feats: Sequence[PairFeature]) -> dict:
    return {
        "language": np.stack([f.language for f in feats]).astype(float),
        "motion": np.stack([f.motion for f in feats]).astype(float),
        "mask": np.stack([f.mask.reshape(-1) for f in feats]).astype(float),
        "visual": np.stack([f.visual.reshape(-1) for f in feats]).astype(float),
    }


class RelationModel:
    def __init__(self, config: ModelConfig = None, params: dict = None):
        self.config = config or ModelConfig()
        self.params = params if params is not None else self._init_params()
        self._check_shapes()

    def _shapes(self) -> dict:
        c = self.config
        shapes = {}
        for name, d_in in BRANCH_INPUTS.items():
            shapes[f"{name}.W"] = (d_in, c.branch_widths[name])
            shapes[f"{name}.b"] = (c.branch_widths[name],)
        fused = sum(c.branch_widths[n] for n in BRANCH_INPUTS)
        shapes["trunk.W"] = (fused, c.trunk_width)
        shapes["trunk.b"] = (c.trunk_width,)
        shapes["spatial.W"] = (c.trunk_width, c.n_spatial)
        shapes["spatial.b"] = (c.n_spatial,)
        shapes["action.W"] = (c.trunk_width, c.n_action)
        shapes["action.b"] = (c.n_action,)
        return shapes

    def _init_params(self) -> dict:
        rng = np.random.default_rng(self.config.seed)
        params = {}
        for name, shape in self._shapes().items():
            if name.endswith(".W"):
                params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
            else:
                params[name] = np.zeros(shape)
        return params

    def _check_shapes(self) -> None:
        expected = self._shapes()
        if set(expected) != set(self.params):
            raise ConfigError(f"parameter names {sorted(self.params)} do not match the config")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"{name} has shape {self.params[name].shape}, config expects {shape}")

    def copy(self) -> "RelationModel":
        return RelationModel(ModelConfig(**asdict(self.config)),
                             {k: v.copy() for k, v in self.params.items()})

    def _forward(self, x: dict):
        P = self.params
        cache = {}
        hidden = []
        for name in BRANCH_INPUTS:
            xi = x[name]
            if xi.shape[1:] != (BRANCH_INPUTS[name],):
                raise ConfigError(f"{name} input has shape {xi.shape[1:]}, expected ({BRANCH_INPUTS[name]},)")
            if xi.any():
                pre = xi @ P[f"{name}.W"] + P[f"{name}.b"]
            else:
                # all-zero input (e.g. no visual store): skip the large matmul
                pre = np.broadcast_to(P[f"{name}.b"], (len(xi), P[f"{name}.b"].shape[0])).copy()
            cache[name] = pre
            hidden.append(np.maximum(pre, 0.0))
        fused = np.concatenate(hidden, axis=1)
        trunk_pre = fused @ P["trunk.W"] + P["trunk.b"]
        trunk = np.maximum(trunk_pre, 0.0)
        ps = _softmax(trunk @ P["spatial.W"] + P["spatial.b"])
        pa = _softmax(trunk @ P["action.W"] + P["action.b"])
        cache.update(fused=fused, trunk_pre=trunk_pre, trunk=trunk)
        return ps, pa, cache

    def predict_proba(self, feats) -> tuple[np.ndarray, np.ndarray]:
        """Spatial and action class probabilities for a batch (list of PairFeature or stacked dict)."""
        x = feats if isinstance(feats, dict) else stack_features(feats)
        ps, pa, _ = self._forward(x)
        return ps, pa

    def loss_and_grad(self, x: dict, y_spatial, y_action, focal: FocalLossConfig = None):
        """Mean over the batch of spatial + action focal loss, and its gradient."""
        focal = focal or FocalLossConfig()
        P = self.params
        ps, pa, cache = self._forward(x)
        n = len(y_spatial)
        ls, dzs = _focal_batch(ps, np.asarray(y_spatial), focal)
        la, dza = _focal_batch(pa, np.asarray(y_action), focal)
        loss = float((ls + la).sum() / n)
        dzs /= n
        dza /= n
        trunk = cache["trunk"]
        grads = {
            "spatial.W": trunk.T @ dzs, "spatial.b": dzs.sum(0),
            "action.W": trunk.T @ dza, "action.b": dza.sum(0),
        }
        dtrunk = (dzs @ P["spatial.W"].T + dza @ P["action.W"].T) * (cache["trunk_pre"] > 0)
        grads["trunk.W"] = cache["fused"].T @ dtrunk
        grads["trunk.b"] = dtrunk.sum(0)
        dfused = dtrunk @ P["trunk.W"].T
        col = 0
        for name in BRANCH_INPUTS:
            width = self.config.branch_widths[name]
            dpre = dfused[:, col:col + width] * (cache[name] > 0)
            col += width
            xi = x[name]
            grads[f"{name}.W"] = xi.T @ dpre if xi.any() else np.zeros_like(P[f"{name}.W"])
            grads[f"{name}.b"] = dpre.sum(0)
        return loss, grads

    def save(self, path) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "RelationModel":
        return load_checkpoint(path)


def forward(model: RelationModel, feat: PairFeature) -> tuple[np.ndarray, np.ndarray]:
    ps, pa = model.predict_proba([feat])
    return ps[0], pa[0]


class _Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.touched = {k: False for k in params}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k in sorted(params):
            g = grads[k]
            if not self.touched[k]:
                if not g.any():
                    continue  # zero moments and zero gradient: the update is exactly 0
                self.touched[k] = True
            m, v = self.m[k], self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            params[k] -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def train(dataset: Sequence, cfg: TrainConfig = None, model_config: ModelConfig = None):
    """Fit a fresh model on ``(PairFeature, (spatial_label, action_label))`` samples.

    Returns ``(model, loss_trace)`` where ``loss_trace[e]`` is the mean
    per-sample loss seen during epoch ``e``.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    model_config = model_config or ModelConfig()
    model_config = ModelConfig(**{**asdict(model_config), "seed": cfg.seed})
    model = RelationModel(model_config)
    feats = [s[0] for s in dataset]
    ys = np.array([s[1][0] for s in dataset], dtype=int)
    ya = np.array([s[1][1] for s in dataset], dtype=int)
    if ys.min() < 0 or ys.max() >= model_config.n_spatial or ya.min() < 0 or ya.max() >= model_config.n_action:
        raise ValueError("labels out of range for the configured predicate vocabularies")

    rng = np.random.default_rng([cfg.seed, 1])
    opt = _Adam(model.params, cfg)
    trace = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            x = stack_features([feats[i] for i in idx])
            loss, grads = model.loss_and_grad(x, ys[idx], ya[idx], cfg.focal)
            opt.step(model.params, grads)
            total += loss * len(idx)
        trace.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, trace[-1])
    return model, trace


def accuracy(model: RelationModel, dataset: Sequence) -> tuple[float, float]:
    """Top-1 accuracy of the spatial and action heads."""
    ps, pa = model.predict_proba([s[0] for s in dataset])
    ys = np.array([s[1][0] for s in dataset])
    ya = np.array([s[1][1] for s in dataset])
    return float((ps.argmax(1) == ys).mean()), float((pa.argmax(1) == ya).mean())


def _instances_from_probs(model, pair, ps, pa, k, min_prob):
    c = model.config
    lo, hi = pair.span
    if hi <= lo:
        return []
    sub = pair.subject.clip(lo, hi)
    obj = pair.object.clip(lo, hi)
    conf = pair.subject.confidence * pair.object.confidence
    out = []
    for probs, names in ((ps, c.spatial_predicates), (pa, c.action_predicates)):
        # class 0 is "none" and is never emitted
        order = sorted(range(1, len(probs)), key=lambda j: (-probs[j], j))
        for j in order[:k]:
            if probs[j] >= min_prob:
                out.append(RelationInstance(sub, names[j - 1], obj, conf * float(probs[j]), (lo, hi)))
    return out


def predict_pair(model: RelationModel, pair: TrajectoryPair, feat: PairFeature,
                 k: int = 3, min_prob: float = 0.05) -> list[RelationInstance]:
    """Top-k non-none predicates per head, scored by conf_sub * conf_obj * probability."""
    ps, pa = forward(model, feat)
    return _instances_from_probs(model, pair, ps, pa, k, min_prob)


def predict_pairs(model: RelationModel, pairs: Sequence[TrajectoryPair], feats: Sequence[PairFeature],
                  k: int = 3, min_prob: float = 0.05) -> list[RelationInstance]:
    if not pairs:
        return []
    ps, pa = model.predict_proba(feats)
    out = []
    for i, pair in enumerate(pairs):
        out.extend(_instances_from_probs(model, pair, ps[i], pa[i], k, min_prob))
    return out


CHECKPOINT_FORMAT = "vidrel-relation-model"


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(rec: dict) -> np.ndarray:
    raw = base64.b64decode(rec["data"])
    return np.frombuffer(raw, dtype=rec["dtype"]).reshape(rec["shape"]).astype(float)


def save_checkpoint(model: RelationModel, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config": asdict(model.config),
        "seed": model.config.seed,
        "input_dims": dict(BRANCH_INPUTS),
        "params": {k: _encode_array(v) for k, v in sorted(model.params.items())},
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> RelationModel:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a relation model checkpoint")
    if doc.get("input_dims", BRANCH_INPUTS) != BRANCH_INPUTS:
        raise ConfigError(f"{path}: checkpoint input dims {doc['input_dims']} differ from {BRANCH_INPUTS}")
    config = ModelConfig(**doc["config"])
    params = {k: _decode_array(v) for k, v in doc["params"].items()}
    return RelationModel(config, params)
