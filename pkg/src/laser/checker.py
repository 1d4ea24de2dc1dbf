"""Alignment checker: probabilistic evaluation of specifications over a database.

Two semantics are supported. ``suffix`` is finite-trace LTL evaluated from
clip 1; ``interval`` matches formulas against half-open clip intervals
``[s, e)`` and asks for a match of the whole video ``[1, m + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional

from .errors import EvaluationError, NonDeterministicDatabase, UnsupportedOperatorInIntervalMode
from .fact_db import DEFAULT_GROUNDING_CAP, FactDatabase
from .provenance import ProofSet, TopKProofs, neg, wmc_grad, wmc_partitions
from .spec_lang import (
    Always,
    And,
    Atom,
    Const,
    Finally,
    Next,
    Not,
    Or,
    Release,
    Specification,
    Until,
    Var,
    WeakNext,
    labels,
    negate,
    to_nnf,
)

SUFFIX = "suffix"
INTERVAL = "interval"
MODES = (SUFFIX, INTERVAL)


@dataclass(frozen=True)
class CheckConfig:
    k: Optional[int] = 5
    mode: str = SUFFIX
    grounding_cap: int = DEFAULT_GROUNDING_CAP

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1 or None")


def _pattern(atom, grounding):
    out = []
    for t in atom.args:
        if isinstance(t, Const):
            out.append(t.name)
        elif isinstance(t, Var):
            out.append(grounding[t.name])
        else:
            out.append(None)
    return out


def _binary_finally(node):
    """Return ``(first, second)`` when ``node`` is ``F (first & F second)``."""
    if isinstance(node, Finally) and isinstance(node.arg, And) and isinstance(node.arg.right, Finally):
        return node.arg.left, node.arg.right.arg
    return None


# ---------------------------------------------------------------------------
# Proof-producing evaluators

class _SuffixEval:
    def __init__(self, db, ctx, grounding, record):
        self.db = db
        self.m = db.num_clips
        self.ctx = ctx
        self.g = grounding
        self.record = record
        self.memo = {}
        self.core_memo = {}

    def eval(self, node, i):
        key = (id(node), i)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        out = self.core(node, i)
        if node.label is not None:
            out = self.ctx.annotate(out, node.label, i)
            self.record.setdefault(node.label, {})[i] = out
        self.memo[key] = out
        return out

    def core(self, node, i):
        key = (id(node), i)
        hit = self.core_memo.get(key)
        if hit is not None:
            return hit
        out = self._core(node, i)
        self.core_memo[key] = out
        return out

    def _core(self, node, i):
        ctx, m = self.ctx, self.m
        if isinstance(node, Atom):
            ids = self.db.match(node.predicate, _pattern(node, self.g), i)
            if len(ids) == 1:
                return ctx.literal(ids[0])
            return ctx.or_all(ctx.literal(f) for f in ids)
        if isinstance(node, Not):
            if not isinstance(node.arg, Atom):
                raise EvaluationError("negation above a non-atom; convert to NNF first")
            ids = self.db.match(node.arg.predicate, _pattern(node.arg, self.g), i)
            return ctx.conjunction(neg(f) for f in ids)
        if isinstance(node, And):
            left = self.eval(node.left, i)
            if not left:
                return left
            return ctx.and_(left, self.eval(node.right, i))
        if isinstance(node, Or):
            return ctx.or_(self.eval(node.left, i), self.eval(node.right, i))
        if isinstance(node, Next):
            return self.eval(node.arg, i + 1) if i < m else ctx.zero
        if isinstance(node, WeakNext):
            return self.eval(node.arg, i + 1) if i < m else ctx.one
        if isinstance(node, Always):
            here = self.eval(node.arg, i)
            if i == m or not here:
                return here
            return ctx.and_(here, self.core(node, i + 1))
        if isinstance(node, Finally):
            here = self.eval(node.arg, i)
            return here if i == m else ctx.or_(here, self.core(node, i + 1))
        if isinstance(node, Until):
            stop = self.eval(node.right, i)
            if i == m:
                return stop
            go = self.eval(node.left, i)
            if go:
                go = ctx.and_(go, self.core(node, i + 1))
            return ctx.or_(stop, go)
        if isinstance(node, Release):
            hold = self.eval(node.right, i)
            if i == m or not hold:
                return hold
            return ctx.and_(hold, ctx.or_(self.eval(node.left, i), self.core(node, i + 1)))
        raise EvaluationError(f"unknown formula node {type(node).__name__}")


class _IntervalEval:
    def __init__(self, db, ctx, grounding, record):
        self.db = db
        self.m = db.num_clips
        self.ctx = ctx
        self.g = grounding
        self.record = record
        self.memo = {}
        self.aux = {}

    def eval(self, node, s, e):
        if e <= s:
            return self.ctx.zero
        key = (id(node), s, e)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        out = self._core(node, s, e)
        if node.label is not None:
            out = self.ctx.annotate(out, node.label, (s, e))
            self.record.setdefault(node.label, {})[(s, e)] = out
        self.memo[key] = out
        return out

    def _point(self, node, i):
        key = ("pt", id(node), i)
        hit = self.aux.get(key)
        if hit is not None:
            return hit
        ctx = self.ctx
        if isinstance(node, Atom):
            ids = self.db.match(node.predicate, _pattern(node, self.g), i)
            out = ctx.or_all(ctx.literal(f) for f in ids)
        else:
            ids = self.db.match(node.arg.predicate, _pattern(node.arg, self.g), i)
            out = ctx.conjunction(neg(f) for f in ids)
        self.aux[key] = out
        return out

    def _run(self, node, s, e):
        # the literal holds at every clip of [s, e)
        key = ("run", id(node), s, e)
        hit = self.aux.get(key)
        if hit is not None:
            return hit
        here = self._point(node, e - 1)
        if e - 1 == s:
            out = here
        else:
            prefix = self._run(node, s, e - 1)
            out = self.ctx.and_(prefix, here) if prefix else prefix
        self.aux[key] = out
        return out

    def _starting_at(self, node, s):
        key = ("start", id(node), s)
        hit = self.aux.get(key)
        if hit is None:
            hit = self.ctx.or_all(self.eval(node, s, e) for e in range(s + 1, self.m + 2))
            self.aux[key] = hit
        return hit

    def _core(self, node, s, e):
        ctx = self.ctx
        if isinstance(node, Atom) or (isinstance(node, Not) and isinstance(node.arg, Atom)):
            return self._run(node, s, e)
        if isinstance(node, And):
            left = self.eval(node.left, s, e)
            return ctx.and_(left, self.eval(node.right, s, e)) if left else left
        if isinstance(node, Or):
            return ctx.or_(self.eval(node.left, s, e), self.eval(node.right, s, e))
        if isinstance(node, Until):
            return ctx.or_all(
                ctx.and_(self.eval(node.left, s, mid), self.eval(node.right, mid, e))
                for mid in range(s + 1, e)
            )
        if isinstance(node, Always):
            return self.eval(node.arg, s, e)
        pair = _binary_finally(node)
        if pair is not None:
            first, second = pair
            head = self._starting_at(first, s)
            if not head:
                return head
            inner = node.arg.right
            tails = []
            for s2 in range(s + 1, e):
                tail = self.eval(second, s2, e)
                if tail and inner.label is not None:
                    tail = ctx.annotate(tail, inner.label, (s2, e))
                tails.append(tail)
            out = ctx.and_(head, ctx.or_all(tails))
            if node.arg.label is not None:
                out = ctx.annotate(out, node.arg.label, (s, e))
            return out
        raise UnsupportedOperatorInIntervalMode(
            f"{type(node).__name__} is not supported in interval mode"
        )


def check_interval_support(node):
    """Raise unless ``node`` (in NNF) only uses interval-mode operators."""
    pair = _binary_finally(node)
    if pair is not None:
        for child in pair:
            check_interval_support(child)
        return
    if isinstance(node, Atom):
        return
    if isinstance(node, Not) and isinstance(node.arg, Atom):
        return
    if isinstance(node, (And, Or, Until)):
        check_interval_support(node.left)
        check_interval_support(node.right)
        return
    if isinstance(node, Always):
        check_interval_support(node.arg)
        return
    raise UnsupportedOperatorInIntervalMode(
        f"{type(node).__name__} is not supported in interval mode"
    )


# ---------------------------------------------------------------------------
# Results

@dataclass
class AlignmentResult:
    score: float
    grad: Dict[int, float]
    proofs: ProofSet
    probs: object = field(repr=False)
    labels: tuple = ()
    # label -> list over groundings of {position: ProofSet}
    labelled: dict = field(default_factory=dict, repr=False)
    k: Optional[int] = None

    @cached_property
    def witness_scores(self):
        """label -> {witness value -> joint WMC of the proofs carrying it}."""
        out = {}
        for lab in self.labels:
            out[lab] = wmc_partitions(self.proofs, self.probs, lambda p, lab=lab: p.witness(lab))
        return out

    def distance_scores(self, first: str, second: str, conditional=False):
        """Scores keyed by witness distance ``d = |t_second - t_first|``.

        Returns ``{d: (score, grad)}``. Only distances realised by some
        retained proof appear. With ``conditional=True`` the joint score is
        divided by the probability that ``first`` and ``second`` hold at some
        pair of positions ``d`` apart.
        """
        for lab in (first, second):
            if lab not in self.labels:
                from .errors import UnknownWitnessLabel

                raise UnknownWitnessLabel(f"witness label {lab!r} not in specification")

        def dist(p):
            a, b = p.witness(first), p.witness(second)
            if a is None or b is None:
                return None
            return abs(_start(b) - _start(a))

        joint = wmc_partitions(self.proofs, self.probs, dist, grad=True)
        if not conditional:
            return joint
        ctx = TopKProofs(self.probs, self.k)
        out = {}
        for d, (value, g) in joint.items():
            parts = []
            for rec_a, rec_b in zip(self.labelled.get(first, []), self.labelled.get(second, [])):
                for ta, pa in rec_a.items():
                    for tb, pb in rec_b.items():
                        if abs(_start(tb) - _start(ta)) == d:
                            parts.append(ctx.and_(pa, pb))
            den_ps = ctx.or_all(parts)
            den, dg = wmc_grad(den_ps, self.probs)
            if den <= 0.0:
                continue
            ratio = value / den
            if ratio >= 1.0:
                out[d] = (1.0, {f: 0.0 for f in set(g) | set(dg)})
                continue
            grad = {}
            for f in set(g) | set(dg):
                grad[f] = (g.get(f, 0.0) * den - value * dg.get(f, 0.0)) / (den * den)
            out[d] = (ratio, grad)
        return out


def _start(v):
    return v[0] if isinstance(v, tuple) else v


def _as_config(cfg, k, mode):
    if cfg is None:
        return CheckConfig(k=k, mode=mode)
    if isinstance(cfg, dict):
        return CheckConfig(**cfg)
    return cfg


def align(db: FactDatabase, spec: Specification, cfg: CheckConfig = None, *, k=5, mode=SUFFIX):
    """Score ``Pr(db |= spec)`` with gradients and witness-annotated proofs."""
    cfg = _as_config(cfg, k, mode)
    body = to_nnf(spec.body)
    if cfg.mode == INTERVAL:
        check_interval_support(body)
    ctx = TopKProofs(db.probs, cfg.k)
    grounds = db.groundings(spec.quantified_vars, cfg.grounding_cap)
    body_labels = tuple(labels(body))
    per_ground = []
    labelled = {lab: [] for lab in body_labels}
    for g in grounds:
        record = {}
        if cfg.mode == SUFFIX:
            per_ground.append(_SuffixEval(db, ctx, g, record).eval(body, 1))
        else:
            per_ground.append(_IntervalEval(db, ctx, g, record).eval(body, 1, db.num_clips + 1))
        for lab in body_labels:
            labelled[lab].append(record.get(lab, {}))
    proofs = ctx.or_all(per_ground)
    score, grad = wmc_grad(proofs, db.probs)
    return AlignmentResult(score, grad, proofs, db.probs, body_labels, labelled, cfg.k)


def align_interval(db, spec, cfg=None, *, k=5):
    if cfg is not None:
        cfg = CheckConfig(k=cfg.k, mode=INTERVAL, grounding_cap=cfg.grounding_cap)
    return align(db, spec, cfg, k=k, mode=INTERVAL)


def violation_score(db, constraint: Specification, cfg=None, *, k=5, mode=SUFFIX) -> float:
    """Probability that some grounding violates ``constraint``.

    Constraint variables are read universally, so the violation is the
    existential closure of the negated body.
    """
    return violation(db, constraint, cfg, k=k, mode=mode).score


def violation(db, constraint, cfg=None, *, k=5, mode=SUFFIX) -> AlignmentResult:
    return align(db, negate(constraint), cfg, k=k, mode=mode)


# ---------------------------------------------------------------------------
# Boolean semantics, written directly from the definitions. Values are numpy
# boolean arrays so that the oracle can evaluate many worlds at once.

class BoolSemantics:
    def __init__(self, db, truth, np_mod, size):
        self.db = db
        self.m = db.num_clips
        self.truth = truth  # fact id -> bool array
        self.np = np_mod
        self.ones = np_mod.ones(size, dtype=bool)
        self.zeros = np_mod.zeros(size, dtype=bool)

    def _any(self, arrays):
        out = self.zeros
        for a in arrays:
            out = out | a
        return out

    def _all(self, arrays):
        out = self.ones
        for a in arrays:
            out = out & a
        return out

    def atom(self, node, g, i):
        return self._any(self.truth(f) for f in self.db.match(node.predicate, _pattern(node, g), i))

    # suffix -------------------------------------------------------------
    def suffix(self, node, g, i, memo):
        key = (id(node), i)
        if key in memo:
            return memo[key]
        m = self.m
        sat = lambda n, j: self.suffix(n, g, j, memo)  # noqa: E731
        if isinstance(node, Atom):
            out = self.atom(node, g, i)
        elif isinstance(node, Not):
            out = ~sat(node.arg, i)
        elif isinstance(node, And):
            out = sat(node.left, i) & sat(node.right, i)
        elif isinstance(node, Or):
            out = sat(node.left, i) | sat(node.right, i)
        elif isinstance(node, Next):
            out = sat(node.arg, i + 1) if i < m else self.zeros
        elif isinstance(node, WeakNext):
            out = sat(node.arg, i + 1) if i < m else self.ones
        elif isinstance(node, Always):
            out = self._all(sat(node.arg, j) for j in range(i, m + 1))
        elif isinstance(node, Finally):
            out = self._any(sat(node.arg, j) for j in range(i, m + 1))
        elif isinstance(node, Until):
            out = self._any(
                sat(node.right, j) & self._all(sat(node.left, l) for l in range(i, j))
                for j in range(i, m + 1)
            )
        elif isinstance(node, Release):
            released = self._any(
                sat(node.left, j) & self._all(sat(node.right, l) for l in range(i, j + 1))
                for j in range(i, m + 1)
            )
            out = released | self._all(sat(node.right, l) for l in range(i, m + 1))
        else:
            raise EvaluationError(f"unknown formula node {type(node).__name__}")
        memo[key] = out
        return out

    # interval -----------------------------------------------------------
    def interval(self, node, g, s, e, memo):
        if e <= s:
            return self.zeros
        key = (id(node), s, e)
        if key in memo:
            return memo[key]
        m = self.m
        sat = lambda n, a, b: self.interval(n, g, a, b, memo)  # noqa: E731
        pair = _binary_finally(node)
        if isinstance(node, Atom):
            out = self._all(self.atom(node, g, i) for i in range(s, e))
        elif isinstance(node, Not) and isinstance(node.arg, Atom):
            out = self._all(~self.atom(node.arg, g, i) for i in range(s, e))
        elif isinstance(node, And):
            out = sat(node.left, s, e) & sat(node.right, s, e)
        elif isinstance(node, Or):
            out = sat(node.left, s, e) | sat(node.right, s, e)
        elif isinstance(node, Until):
            out = self._any(sat(node.left, s, mid) & sat(node.right, mid, e) for mid in range(s + 1, e))
        elif isinstance(node, Always):
            out = sat(node.arg, s, e)
        elif pair is not None:
            first, second = pair
            out = self._any(
                sat(first, s, e1) & sat(second, s2, e)
                for e1 in range(s + 1, m + 2)
                for s2 in range(s + 1, e)
            )
        else:
            raise UnsupportedOperatorInIntervalMode(
                f"{type(node).__name__} is not supported in interval mode"
            )
        memo[key] = out
        return out

    def spec(self, spec, mode=SUFFIX, cap=DEFAULT_GROUNDING_CAP):
        out = self.zeros
        if mode == SUFFIX:
            body = spec.body
            for g in self.db.groundings(spec.quantified_vars, cap):
                out = out | self.suffix(body, g, 1, {})
        else:
            body = to_nnf(spec.body)
            check_interval_support(body)
            for g in self.db.groundings(spec.quantified_vars, cap):
                out = out | self.interval(body, g, 1, self.m + 1, {})
        return out


def check_bool(trace: FactDatabase, spec: Specification, mode=SUFFIX) -> bool:
    """Boolean satisfaction on a deterministic database (probabilities 0 or 1)."""
    import numpy as np

    if not trace.is_deterministic():
        raise NonDeterministicDatabase("check_bool needs every probability to be 0 or 1")
    truth = {f.id: np.array([f.prob == 1.0]) for f in trace.facts}
    sem = BoolSemantics(trace, truth.__getitem__, np, 1)
    return bool(sem.spec(spec, mode)[0])
