"""Brute-force ground truth by enumerating possible worlds.

Independent of the proof engine: satisfaction is decided by the direct
boolean semantics in :class:`laser.checker.BoolSemantics`, evaluated on a
block of worlds at a time.
"""
from __future__ import annotations

import math

import numpy as np

from .checker import SUFFIX, BoolSemantics
from .errors import TooManyFacts
from .spec_lang import Atom, walk

MAX_FACTS = 24
_LOW_BITS = 16


def _relevant_facts(db, spec):
    preds = {n.predicate for n in walk(spec.body) if isinstance(n, Atom)}
    return [f.id for f in db.facts if f.predicate in preds]


def exact_align(db, spec, mode=SUFFIX, probs=None) -> float:
    """Sum of the probabilities of the worlds satisfying ``spec``.

    Facts whose predicate does not occur in ``spec`` cannot change
    satisfaction and are summed out analytically.
    """
    if len(db.facts) > MAX_FACTS:
        raise TooManyFacts(f"{len(db.facts)} facts exceed the oracle cap of {MAX_FACTS}")
    probs = db.probs if probs is None else np.asarray(probs, dtype=float)
    rel = _relevant_facts(db, spec)
    n = len(rel)
    slot = {fid: j for j, fid in enumerate(rel)}
    p = probs[rel] if n else np.zeros(0)
    # worlds are enumerated in blocks over the low bits; the high bits are
    # constant within a block, so low-bit masks and weights are shared
    low = min(n, _LOW_BITS)
    worlds = np.arange(1 << low, dtype=np.int64)
    low_bits = [((worlds >> j) & 1).astype(bool) for j in range(low)]
    low_weight = np.ones(len(worlds))
    for j in range(low):
        low_weight *= np.where(low_bits[j], p[j], 1.0 - p[j])
    absent = np.zeros(len(worlds), dtype=bool)
    partial = []
    for high in range(1 << (n - low)):
        high_bits = [bool((high >> (j - low)) & 1) for j in range(low, n)]
        high_weight = 1.0
        for j, b in enumerate(high_bits, start=low):
            high_weight *= p[j] if b else 1.0 - p[j]
        if high_weight == 0.0:
            continue

        def truth(fid, high_bits=high_bits):
            j = slot.get(fid)
            if j is None:
                return absent
            return low_bits[j] if j < low else np.bool_(high_bits[j - low])

        sat = BoolSemantics(db, truth, np, len(worlds)).spec(spec, mode)
        partial.append(high_weight * float(np.dot(low_weight, sat)))
    return math.fsum(partial)


def fd_grad(db, spec, fact_id, eps=1e-5, mode=SUFFIX) -> float:
    """Central finite difference of :func:`exact_align` in one fact probability.

    Falls back to a one-sided difference when ``p +/- eps`` leaves [0, 1].
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if len(db.facts) > MAX_FACTS:
        raise TooManyFacts(f"{len(db.facts)} facts exceed the oracle cap of {MAX_FACTS}")
    base = np.array(db.probs, dtype=float)
    p = base[fact_id]
    lo, hi = max(0.0, p - eps), min(1.0, p + eps)
    up, down = base.copy(), base.copy()
    up[fact_id], down[fact_id] = hi, lo
    return (exact_align(db, spec, mode, up) - exact_align(db, spec, mode, down)) / (hi - lo)
