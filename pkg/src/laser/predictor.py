"""Linear clip-wise predicate predictor trained from specification-level labels.

:class:`AlignmentPredictor` follows the scikit-learn estimator protocol:
``fit`` takes a list of episodes (features plus their specifications) and
``predict`` returns one probabilistic :class:`~laser.fact_db.FactDatabase`
per episode.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionMismatch, EmptyDataset, InvalidConfig, NonFiniteLoss
from .losses import (
    BatchItem,
    LossConfig,
    alignment_loss,
    contrastive_loss,
    semantic_loss,
    temporal_loss,
)
from .spec_lang import labels
from .synthgen import STATIC_SCOPE, Episode, TaskLayout

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "loss_total", "loss_align", "loss_contrastive", "loss_temporal",
               "loss_semantic")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PredictorParams:
    """Per-head weights ``W`` of shape (head features, classes) and bias ``b``."""
    weights: Dict[str, np.ndarray]
    biases: Dict[str, np.ndarray]

    @classmethod
    def init(cls, layout: TaskLayout, rng=None, scale=0.0, bias=0.0):
        weights, biases = {}, {}
        for h in layout.heads:
            if rng is None or scale == 0.0:
                weights[h.name] = np.zeros((h.size, h.size))
            else:
                weights[h.name] = rng.normal(0.0, scale, size=(h.size, h.size))
            # softmax heads are shift invariant; only sigmoid heads use the bias
            b = bias if h.activation == "sigmoid" else 0.0
            biases[h.name] = np.full(h.size, float(b))
        return cls(weights, biases)

    def copy(self):
        return PredictorParams({k: v.copy() for k, v in self.weights.items()},
                               {k: v.copy() for k, v in self.biases.items()})

    def flat(self):
        return np.concatenate([np.concatenate([self.weights[k].ravel(), self.biases[k]])
                               for k in sorted(self.weights)])


def _check_features(layout, features):
    feats = check_array(features, ensure_2d=True, dtype=float)
    if feats.shape != (layout.num_clips, layout.feature_dim):
        raise DimensionMismatch(
            f"features of shape {feats.shape}, expected ({layout.num_clips}, {layout.feature_dim})"
        )
    return feats


def forward(layout: TaskLayout, params: PredictorParams, features):
    """Fact probability vector (template fact order) plus a cache for backward."""
    feats = _check_features(layout, features)
    probs = np.empty(len(layout.template))
    cache = {}
    for h in layout.heads:
        W, b = params.weights[h.name], params.biases[h.name]
        if W.shape[0] != h.size:
            raise DimensionMismatch(f"head {h.name}: weight rows {W.shape[0]} != {h.size}")
        x = layout.head_features(feats, h)  # (m, n, size)
        if h.scope == STATIC_SCOPE:
            x = x.mean(axis=0)  # (n, size)
        z = x @ W + b
        p = _softmax(z) if h.activation == "softmax" else _sigmoid(z)
        probs[layout.fact_ids[h.name]] = p
        cache[h.name] = (x, p)
    return probs, cache


def backward(layout: TaskLayout, params: PredictorParams, cache, grad_probs):
    """Gradients of a loss w.r.t. the parameters, given d loss / d fact prob."""
    gW, gb = {}, {}
    for h in layout.heads:
        x, p = cache[h.name]
        g = grad_probs[layout.fact_ids[h.name]]
        if h.activation == "softmax":
            dz = p * (g - (p * g).sum(axis=-1, keepdims=True))
        else:
            dz = g * p * (1.0 - p)
        size = x.shape[-1]
        gW[h.name] = x.reshape(-1, size).T @ dz.reshape(-1, h.size)
        gb[h.name] = dz.reshape(-1, h.size).sum(axis=0)
    return PredictorParams(gW, gb)


def predict_db(layout, params, episode_or_features):
    feats = getattr(episode_or_features, "features", episode_or_features)
    probs, _ = forward(layout, params, feats)
    return layout.database(np.clip(probs, 0.0, 1.0))


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: PredictorParams, grads: PredictorParams):
        if self.m is None:
            self.m = PredictorParams({k: np.zeros_like(v) for k, v in params.weights.items()},
                                     {k: np.zeros_like(v) for k, v in params.biases.items()})
            self.v = self.m.copy()
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for store, mstore, vstore, gstore in (
            (params.weights, self.m.weights, self.v.weights, grads.weights),
            (params.biases, self.m.biases, self.v.biases, grads.biases),
        ):
            for k in store:
                g = gstore[k]
                mstore[k] = self.beta1 * mstore[k] + (1 - self.beta1) * g
                vstore[k] = self.beta2 * vstore[k] + (1 - self.beta2) * g * g
                store[k] = store[k] - self.lr * (mstore[k] / c1) / (np.sqrt(vstore[k] / c2) + self.eps)

    def state(self):
        if self.m is None:
            return {"t": 0}
        return {"t": self.t,
                "m": {k: v.ravel().tolist() for k, v in self.m.weights.items()},
                "m_bias": {k: v.tolist() for k, v in self.m.biases.items()},
                "v": {k: v.ravel().tolist() for k, v in self.v.weights.items()},
                "v_bias": {k: v.tolist() for k, v in self.v.biases.items()}}


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for k in params.weights:
            params.weights[k] = params.weights[k] - self.lr * grads.weights[k]
            params.biases[k] = params.biases[k] - self.lr * grads.biases[k]

    def state(self):
        return {}


def batch_objective(layout, params, episodes: Sequence[Episode], specs, cfg: LossConfig,
                    constraints=(), pre_label="pre", post_label="post"):
    """Total loss of one minibatch and its parameter gradient.

    Returns ``(total, parts, grads)`` where ``parts`` holds the unweighted
    component losses.
    """
    n = len(episodes)
    fwd = [forward(layout, params, ep.features) for ep in episodes]
    dbs = [layout.database(np.clip(p, 0.0, 1.0)) for p, _ in fwd]
    items = [BatchItem(db, spec) for db, spec in zip(dbs, specs)]
    fact_grads = [np.zeros(len(layout.template)) for _ in episodes]

    def accumulate(i, grad, c):
        if c == 0.0:
            return
        for f, g in grad.items():
            fact_grads[i][f] += c * g

    cache = {}
    parts = {"align": 0.0, "contrastive": 0.0, "temporal": 0.0, "semantic": 0.0}
    if cfg.contrastive > 0:
        lc, cgrads = contrastive_loss(items, cfg, cache)
        parts["contrastive"] = lc
        for i, g in enumerate(cgrads):
            accumulate(i, g, cfg.contrastive)
    for i, item in enumerate(items):
        res = cache.get((i, i))
        if res is None and (cfg.align > 0 or cfg.temporal > 0):
            from .checker import align

            res = cache[(i, i)] = align(item.db, item.spec, cfg.check)
        if cfg.align > 0:
            la, g = alignment_loss(item, cfg, res)
            parts["align"] += la / n
            accumulate(i, g, cfg.align / n)
        if cfg.temporal > 0:
            spec_labels = set(labels(item.spec.body))
            if pre_label in spec_labels and post_label in spec_labels:
                lt, g = temporal_loss(item, pre_label, post_label, cfg, res)
                parts["temporal"] += lt / n
                accumulate(i, g, cfg.temporal / n)
        if cfg.semantic > 0 and constraints:
            ls, g = semantic_loss(item.db, constraints, cfg)
            parts["semantic"] += ls / n
            accumulate(i, g, cfg.semantic / n)
    total = (cfg.align * parts["align"] + cfg.contrastive * parts["contrastive"]
             + cfg.temporal * parts["temporal"] + cfg.semantic * parts["semantic"])
    grads = None
    for (_, c), g in zip(fwd, fact_grads):
        gp = backward(layout, params, c, g)
        if grads is None:
            grads = gp
        else:
            for k in grads.weights:
                grads.weights[k] += gp.weights[k]
                grads.biases[k] += gp.biases[k]
    return total, parts, grads


class AlignmentPredictor(BaseEstimator):
    """Learns fact probabilities from (video features, specification) pairs.

    Parameters mirror the training configuration: optimiser settings, the
    top-k bound of the alignment checker, the four loss weights and the
    integrity constraints used by the semantic loss (a list of
    ``(Specification, weight)`` pairs; each pair's weight multiplies the
    global ``semantic_weight``).
    """

    def __init__(self, layout=None, learning_rate=1e-2, epochs=10, batch_size=3,
                 optimizer="adam", k=5, mode="suffix", align_weight=1.0,
                 contrastive_weight=1.0, temporal_weight=1.0, semantic_weight=0.05,
                 constraints=None, bce_epsilon=1e-6, d_tau_fraction=0.9,
                 conditional_temporal=False, init_scale=0.01, init_bias=0.0, seed=0,
                 warm_start=False):
        self.layout = layout
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.k = k
        self.mode = mode
        self.align_weight = align_weight
        self.contrastive_weight = contrastive_weight
        self.temporal_weight = temporal_weight
        self.semantic_weight = semantic_weight
        self.constraints = constraints
        self.bce_epsilon = bce_epsilon
        self.d_tau_fraction = d_tau_fraction
        self.conditional_temporal = conditional_temporal
        self.init_scale = init_scale
        self.init_bias = init_bias
        self.seed = seed
        self.warm_start = warm_start

    # -- helpers ---------------------------------------------------------

    def _loss_config(self):
        return LossConfig(
            bce_epsilon=self.bce_epsilon, d_tau_fraction=self.d_tau_fraction, k=self.k,
            mode=self.mode, conditional_temporal=self.conditional_temporal,
            align=self.align_weight, contrastive=self.contrastive_weight,
            temporal=self.temporal_weight, semantic=self.semantic_weight,
        )

    def _validate(self):
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidConfig("optimizer must be 'adam' or 'sgd'")

    def _resolve_layout(self, episodes):
        layout = self.layout
        if layout is None:
            layout = next((ep.layout for ep in episodes if ep.layout is not None), None)
        if layout is None:
            raise InvalidConfig("no task layout given and none attached to the episodes")
        return layout

    def initial_params(self, layout):
        rng = np.random.default_rng(self.seed)
        return PredictorParams.init(layout, rng, self.init_scale, self.init_bias)

    # -- estimator API ---------------------------------------------------

    def fit(self, X: Sequence[Episode], y=None):
        """Train on episodes; ``y`` optionally overrides their specifications."""
        self._validate()
        episodes = list(X)
        if not episodes:
            raise EmptyDataset("cannot fit on an empty dataset")
        specs = list(y) if y is not None else [ep.spec for ep in episodes]
        if len(specs) != len(episodes):
            raise InvalidConfig("X and y lengths differ")
        layout = self._resolve_layout(episodes)
        for ep in episodes:
            _check_features(layout, ep.features)
        cfg = self._loss_config()
        constraints = list(self.constraints or [])
        if self.warm_start and hasattr(self, "params_"):
            params, opt, rng, log = self.params_, self._opt, self._rng, self.log_
        else:
            params = self.initial_params(layout)
            opt = _Adam(self.learning_rate) if self.optimizer == "adam" else _SGD(self.learning_rate)
            rng = np.random.default_rng(self.seed)
            log = []
        first = len(log) + 1
        for epoch in range(first, first + self.epochs):
            order = rng.permutation(len(episodes))
            sums = dict.fromkeys(("total", "align", "contrastive", "temporal", "semantic"), 0.0)
            nb = 0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                total, parts, grads = batch_objective(
                    layout, params, [episodes[i] for i in idx], [specs[i] for i in idx],
                    cfg, constraints)
                if not math.isfinite(total):
                    raise NonFiniteLoss(
                        f"non-finite loss at epoch {epoch}, batch {nb}: {parts}")
                opt.step(params, grads)
                sums["total"] += total
                for k_, v in parts.items():
                    sums[k_] += v
                nb += 1
            row = {"epoch": epoch, **{f"loss_{k_}": v / nb for k_, v in sums.items()}}
            log.append(row)
            logger.info("epoch %d loss %.6f", epoch, row["loss_total"])
        self.layout_ = layout
        self.params_ = params
        self.log_ = log
        self.optimizer_state_ = opt.state()
        self._opt, self._rng = opt, rng
        return self

    def predict(self, X) -> List:
        check_is_fitted(self, "params_")
        return [predict_db(self.layout_, self.params_, ep) for ep in X]

    def predict_proba(self, X) -> np.ndarray:
        """Fact probability vectors, one row per episode."""
        check_is_fitted(self, "params_")
        return np.stack([forward(self.layout_, self.params_, ep.features)[0] for ep in X])

    def score(self, X, y=None):
        """Mean alignment score of each episode with its specification."""
        from .checker import align

        dbs = self.predict(X)
        specs = list(y) if y is not None else [ep.spec for ep in X]
        return float(np.mean([align(db, s, k=self.k, mode=self.mode).score
                              for db, s in zip(dbs, specs)]))

    # -- persistence -----------------------------------------------------

    def log_csv(self) -> str:
        check_is_fitted(self, "log_")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in self.log_:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])
        return buf.getvalue()

    def checkpoint(self) -> dict:
        check_is_fitted(self, "params_")
        return params_to_checkpoint(self.layout_, self.params_, self.optimizer_state_)

    @classmethod
    def from_checkpoint(cls, obj, layout, **kw):
        est = cls(layout=layout, **kw)
        est.layout_ = layout
        est.params_ = params_from_checkpoint(obj, layout)
        est.log_ = []
        est.optimizer_state_ = obj.get("optimizer", {})
        return est


def params_to_checkpoint(layout, params, optimizer_state=None):
    heads = {}
    for h in layout.heads:
        W = params.weights[h.name]
        heads[h.name] = {"shape": list(W.shape), "weights": W.ravel().tolist(),
                         "bias": params.biases[h.name].tolist()}
    return {"schema_fingerprint": layout.schema.fingerprint(), "heads": heads,
            "optimizer": optimizer_state or {}}


def params_from_checkpoint(obj, layout):
    if obj.get("schema_fingerprint") != layout.schema.fingerprint():
        raise DimensionMismatch("checkpoint was trained for a different schema")
    weights, biases = {}, {}
    for h in layout.heads:
        d = obj["heads"][h.name]
        weights[h.name] = np.asarray(d["weights"], dtype=float).reshape(d["shape"])
        biases[h.name] = np.asarray(d["bias"], dtype=float)
    return PredictorParams(weights, biases)


# ---------------------------------------------------------------------------
# Functional entry points

@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 10
    batch_size: int = 3
    optimizer: str = "adam"
    k: Optional[int] = 5
    mode: str = "suffix"
    align_weight: float = 1.0
    contrastive_weight: float = 1.0
    temporal_weight: float = 1.0
    semantic_weight: float = 0.05
    seed: int = 0
    init_scale: float = 0.01
    init_bias: float = 0.0
    conditional_temporal: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")

    def estimator(self, layout=None, constraints=None) -> AlignmentPredictor:
        return AlignmentPredictor(layout=layout, constraints=constraints, **self.__dict__)


def predict(params: PredictorParams, episode: Episode, layout=None):
    return predict_db(layout or episode.layout, params, episode)


def train(episodes, cfg: TrainConfig = TrainConfig(), constraints=None, layout=None):
    """Fit a predictor; returns ``(params, log)``."""
    est = cfg.estimator(layout, constraints).fit(episodes)
    return est.params_, est.log_
