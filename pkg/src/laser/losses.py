"""Training signals computed from alignment scores.

Every loss returns ``(value, grads)`` where ``grads`` maps fact ids to the
derivative of the loss with respect to that fact's probability (one map per
database for batch losses).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .checker import SUFFIX, CheckConfig, align, violation
from .errors import DTauNotBelowDMax, InvalidConfig
from .spec_lang import Specification, parse_spec

Grad = Dict[int, float]


@dataclass(frozen=True)
class LossConfig:
    bce_epsilon: float = 1e-6
    d_tau_fraction: float = 0.9
    k: Optional[int] = 5
    mode: str = SUFFIX
    conditional_temporal: bool = False
    align: float = 1.0
    contrastive: float = 1.0
    temporal: float = 1.0
    semantic: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.bce_epsilon < 0.1:
            raise InvalidConfig("bce_epsilon must lie in (0, 0.1)")
        if not 0.0 <= self.d_tau_fraction < 1.0:
            raise InvalidConfig("d_tau_fraction must lie in [0, 1)")
        for name in ("align", "contrastive", "temporal", "semantic"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"loss weight {name} must be >= 0")

    @property
    def check(self):
        return CheckConfig(k=self.k, mode=self.mode)


class BatchItem(NamedTuple):
    db: object
    spec: Specification
    key: str = None

    @property
    def spec_key(self):
        return self.key if self.key is not None else self.spec.key


def bce(p: float, target: int, eps: float = 1e-6) -> Tuple[float, float]:
    """Binary cross-entropy and its derivative in ``p``.

    ``p`` is clamped to ``[eps, 1 - eps]``; the derivative is taken at the
    clamped point so that saturated scores still receive a gradient.
    """
    q = min(1.0 - eps, max(eps, p))
    if target:
        return -math.log(q), -1.0 / q
    return -math.log(1.0 - q), 1.0 / (1.0 - q)


def _scaled(grad: Grad, c: float) -> Grad:
    return {f: c * g for f, g in grad.items()}


def _add_into(acc: Grad, grad: Grad, c: float = 1.0):
    for f, g in grad.items():
        acc[f] = acc.get(f, 0.0) + c * g


def alignment_loss(item: BatchItem, cfg: LossConfig = LossConfig(), result=None):
    result = result if result is not None else align(item.db, item.spec, cfg.check)
    loss, dp = bce(result.score, 1, cfg.bce_epsilon)
    return loss, _scaled(result.grad, dp)


def contrastive_loss(batch: Sequence[BatchItem], cfg: LossConfig = LossConfig(), cache=None):
    """Mean BCE over every (video, spec) pair of the batch.

    The target of pair ``(i, j)`` is 1 when the two specifications are
    structurally equal and 0 otherwise. ``cache`` maps ``(i, j)`` to
    already computed alignment results.
    """
    n = len(batch)
    if n == 0:
        raise InvalidConfig("contrastive loss needs a nonempty batch")
    cache = {} if cache is None else cache
    grads: List[Grad] = [{} for _ in batch]
    total = 0.0
    for i, item in enumerate(batch):
        for j, other in enumerate(batch):
            res = cache.get((i, j))
            if res is None:
                res = cache[(i, j)] = align(item.db, other.spec, cfg.check)
            target = int(item.spec_key == other.spec_key)
            loss, dp = bce(res.score, target, cfg.bce_epsilon)
            total += loss
            _add_into(grads[i], res.grad, dp / (n * n))
    return total / (n * n), grads


def temporal_weight(d: int, d_max: float, d_tau: float) -> float:
    """Zero up to ``d_tau``, then linear up to 1 at ``d_max``."""
    if not d_tau < d_max:
        raise DTauNotBelowDMax(f"d_tau={d_tau} must be below d_max={d_max}")
    if d <= d_tau:
        return 0.0
    return (d - d_tau) / (d_max - d_tau)


def temporal_loss(item: BatchItem, pre_label="pre", post_label="post",
                  cfg: LossConfig = LossConfig(), result=None):
    """Witness-distance weighted loss favouring widely separated pre/post clips.

    Distances without any retained proof contribute nothing.
    """
    result = result if result is not None else align(item.db, item.spec, cfg.check)
    d_max = item.db.num_clips - 1
    if d_max <= 0:
        return 0.0, {}
    d_tau = cfg.d_tau_fraction * d_max
    parts = result.distance_scores(pre_label, post_label, conditional=cfg.conditional_temporal)
    total, grads = 0.0, {}
    for d, (score, grad) in parts.items():
        w = temporal_weight(d, d_max, d_tau)
        if w == 0.0:
            continue
        loss, dp = bce(score, 1, cfg.bce_epsilon)
        total += w * loss
        _add_into(grads, grad, w * dp)
    return total, grads


def semantic_loss(db, constraints: Sequence[Tuple[Specification, float]],
                  cfg: LossConfig = LossConfig()):
    """Weighted BCE pushing every constraint's violation probability to 0."""
    total, grads = 0.0, {}
    for spec, w in constraints:
        res = violation(db, spec, cfg.check)
        loss, dp = bce(res.score, 0, cfg.bce_epsilon)
        total += w * loss
        _add_into(grads, res.grad, w * dp)
    return total, grads


# ---------------------------------------------------------------------------
# Constraint files: one spec per line, optionally prefixed by "w=<float> ".

def parse_constraints(text: str, schema=None, default_weight=1.0):
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        weight = default_weight
        if line.startswith("w="):
            head, _, line = line.partition(" ")
            try:
                weight = float(head[2:])
            except ValueError:
                raise InvalidConfig(f"line {lineno}: bad weight {head!r}") from None
            if weight < 0:
                raise InvalidConfig(f"line {lineno}: weight must be >= 0")
        out.append((parse_spec(line, schema), weight))
    return out


def format_constraints(constraints) -> str:
    return "".join(f"w={w:g} {spec}\n" for spec, w in constraints)
