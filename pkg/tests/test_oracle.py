import random
import time
from dataclasses import replace

import pytest

from laser.checker import INTERVAL, SUFFIX
from laser.errors import TooManyFacts
from laser.fact_db import FactDatabase, PredicateDecl, Schema
from laser.fuzz import random_db, random_instance, random_spec
from laser.oracle import MAX_FACTS, exact_align, fd_grad
from laser.spec_lang import Atom, Const, Specification, negate, parse_spec

from conftest import CW_SCHEMA, climb_walk_db

CU_W = parse_spec("climb(M,_) U walk(M,right)", CW_SCHEMA)


def test_single_fact():
    db = FactDatabase.from_clip_scores(CW_SCHEMA, ["M"], 1, {("walk", 1, ("M", "right")): 0.9})
    assert exact_align(db, parse_spec("walk(M,right)", CW_SCHEMA)) == pytest.approx(0.9)


def test_climb_walk():
    assert exact_align(climb_walk_db(), CU_W) == pytest.approx(0.72, abs=1e-12)
    assert fd_grad(climb_walk_db(), CU_W, 0) == pytest.approx(0.8, rel=1e-6)


def test_cap():
    schema = Schema([PredicateDecl("p", 1)])
    db = FactDatabase.from_clip_scores(schema, ["a"], 25, {("p", t, ("a",)): 0.5
                                                           for t in range(1, 26)})
    assert len(db.facts) == MAX_FACTS + 1
    with pytest.raises(TooManyFacts):
        exact_align(db, parse_spec("F p(a)", schema))


def test_irrelevant_fact_and_tautology_have_zero_gradient():
    db = FactDatabase.from_clip_scores(
        CW_SCHEMA, ["M"], 2,
        {("climb", 1, ("M", "up")): 0.9, ("walk", 2, ("M", "right")): 0.8})
    only_walk = parse_spec("F walk(M,right)", CW_SCHEMA)
    assert fd_grad(db, only_walk, 0) == 0.0
    taut = parse_spec("climb(M,up) | !climb(M,up)", CW_SCHEMA)
    assert fd_grad(db, taut, 0) == pytest.approx(0.0, abs=1e-9)


def test_one_sided_difference_at_boundary():
    db = FactDatabase.from_clip_scores(CW_SCHEMA, ["M"], 1, {("walk", 1, ("M", "right")): 1.0})
    assert fd_grad(db, parse_spec("walk(M,right)", CW_SCHEMA), 0) == pytest.approx(1.0)


def test_complement_sums_to_one():
    # negate() keeps the existential prefix, so worlds only partition for
    # quantifier-free specifications
    rng = random.Random(21)
    for _ in range(100):
        spec = random_spec(rng, allow_vars=False)
        db = random_db(rng)
        assert exact_align(db, spec) + exact_align(db, negate(spec)) == pytest.approx(1.0,
                                                                                       abs=1e-12)


SWAP = {"a": "b", "b": "a"}


def _swap_entities(f):
    """Exchange the constants ``a`` and ``b`` throughout a formula."""
    if isinstance(f, Atom):
        args = tuple(Const(SWAP.get(t.name, t.name)) if isinstance(t, Const) else t
                     for t in f.args)
        return replace(f, args=args)
    if hasattr(f, "arg"):
        return replace(f, arg=_swap_entities(f.arg))
    return replace(f, left=_swap_entities(f.left), right=_swap_entities(f.right))


def test_invariant_under_fact_relabeling():
    # swapping entity names permutes the fact ids without changing the problem
    rng = random.Random(22)
    for _ in range(50):
        interval = rng.random() < 0.5
        db, spec = random_instance(rng, interval=interval)
        renamed = [((f.predicate, f.time, tuple(SWAP.get(a, a) for a in f.args)), f.prob)
                   for f in db.facts]
        other = FactDatabase.from_clip_scores(db.schema, db.entities, db.num_clips, renamed,
                                              values=db.values)
        spec2 = Specification(spec.quantified_vars, _swap_entities(spec.body))
        mode = INTERVAL if interval else SUFFIX
        assert exact_align(db, spec, mode) == pytest.approx(exact_align(other, spec2, mode),
                                                            abs=1e-12)


def test_runtime_at_cap():
    schema = Schema([PredicateDecl("p", 1), PredicateDecl("q", 1)])
    scores = {}
    for t in range(1, 13):
        scores[("p", t, ("a",))] = 0.5
        scores[("q", t, ("a",))] = 0.5
    db = FactDatabase.from_clip_scores(schema, ["a"], 12, scores)
    assert len(db.facts) == MAX_FACTS
    start = time.perf_counter()
    exact_align(db, parse_spec("p(a) U q(a)", schema))
    assert time.perf_counter() - start < 1.0
