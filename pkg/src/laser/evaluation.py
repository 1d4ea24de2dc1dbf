"""Recognition (per-predicate F1) and retrieval metrics."""
from __future__ import annotations

from typing import Dict, Optional, Sequence

import numpy as np

from .checker import SUFFIX, align, violation
from .errors import TooFewEpisodes


def _predicted_dbs(model, episodes):
    """Databases for ``episodes``: ground truth when ``model`` is None."""
    if model is None:
        return [ep.ground_truth for ep in episodes]
    if hasattr(model, "predict"):
        return model.predict(episodes)
    from .predictor import predict_db

    return [predict_db(ep.layout, model, ep) for ep in episodes]


def prf(tp: int, fp: int, fn: int) -> Dict[str, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f1": f, "support": tp + fn}


def f1_from_dbs(predicted, truth, threshold=0.5):
    """Per-predicate P/R/F1 of thresholded fact probabilities.

    Both sequences hold databases over the same fact layout. ``mean_f1``
    averages over predicates with at least one true fact.
    """
    counts = {}
    for pdb, tdb in zip(predicted, truth):
        preds = np.asarray(pdb.probs) >= threshold
        gold = np.asarray(tdb.probs) >= 0.5
        for f in tdb.facts:
            c = counts.setdefault(f.predicate, [0, 0, 0])
            hit, want = preds[f.id], gold[f.id]
            if hit and want:
                c[0] += 1
            elif hit:
                c[1] += 1
            elif want:
                c[2] += 1
    per = {pred: prf(*c) for pred, c in sorted(counts.items())}
    scored = [v["f1"] for v in per.values() if v["support"] > 0]
    return {"predicates": per, "mean_f1": float(np.mean(scored)) if scored else 0.0}


def eval_f1(model, episodes, threshold=0.5):
    """F1 of a fitted predictor (or of raw parameters) against episode ground truth."""
    return f1_from_dbs(_predicted_dbs(model, episodes), [ep.ground_truth for ep in episodes],
                       threshold)


def retrieval_from_matrix(scores) -> Dict[str, float]:
    """Counts of strictly dominant diagonal entries per row and per column.

    ``scores[i, j]`` is the alignment of video ``i`` with spec ``j``.
    Ties count as failures.
    """
    s = np.asarray(scores, dtype=float)
    n = s.shape[0]
    diag = np.diag(s)
    off = s + np.diag(np.full(n, -np.inf))
    rows = int(np.sum(diag > off.max(axis=1))) if n > 1 else n
    cols = int(np.sum(diag > off.max(axis=0))) if n > 1 else n
    return {"spec_correct": rows, "video_correct": cols, "total": n}


def retrieval_groups(n, group_size=3, seed=0):
    """Disjoint seeded groups; leftover episodes are dropped."""
    if n < group_size:
        raise TooFewEpisodes(f"{n} episodes, need at least {group_size}")
    order = np.random.default_rng(seed).permutation(n)
    return [order[i:i + group_size].tolist() for i in range(0, n - group_size + 1, group_size)]


def eval_retrieval(model, episodes, group_size=3, seed=0, k: Optional[int] = 5, mode=SUFFIX):
    """Spec- and video-retrieval accuracy over disjoint random groups.

    ``model`` may be None to score the ground-truth databases.
    """
    episodes = list(episodes)
    groups = retrieval_groups(len(episodes), group_size, seed)
    dbs = _predicted_dbs(model, episodes)
    spec_ok = video_ok = total = 0
    for g in groups:
        mat = np.array([[align(dbs[i], episodes[j].spec, k=k, mode=mode).score for j in g]
                        for i in g])
        r = retrieval_from_matrix(mat)
        spec_ok += r["spec_correct"]
        video_ok += r["video_correct"]
        total += r["total"]
    return {"spec_retrieval_acc": spec_ok / total, "video_retrieval_acc": video_ok / total}


def mean_violation(model, episodes, constraints: Sequence, k: Optional[int] = 5, mode=SUFFIX):
    """Average over episodes and constraints of the violation probability."""
    dbs = _predicted_dbs(model, episodes)
    vals = [violation(db, spec, k=k, mode=mode).score for db in dbs for spec, _ in constraints]
    return float(np.mean(vals)) if vals else 0.0
