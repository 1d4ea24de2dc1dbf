import random

import pytest

from laser.checker import INTERVAL, SUFFIX, align, align_interval, check_bool, violation_score
from laser.errors import (
    NonDeterministicDatabase,
    UnknownWitnessLabel,
    UnsupportedOperatorInIntervalMode,
)
from laser.fact_db import FactDatabase
from laser.fuzz import random_db, random_instance
from laser.oracle import exact_align, fd_grad
from laser.spec_lang import Specification, parse_spec, to_nnf

from conftest import BN_SCHEMA, CW_SCHEMA, climb_walk_db, trace_db

CU_W = parse_spec("climb(M,_) U walk(M,right)", CW_SCHEMA)


# -- suffix semantics ---------------------------------------------------------

def test_ccww_satisfies_until():
    assert align(trace_db("ccww"), CU_W).score == 1.0
    assert check_bool(trace_db("ccww"), CU_W)


def test_cccc_violates_until():
    assert align(trace_db("cccc"), CU_W).score == 0.0
    assert not check_bool(trace_db("cccc"), CU_W)


def test_single_walk_satisfies_until():
    assert check_bool(trace_db("w"), CU_W)
    assert align(trace_db("w"), CU_W).score == 1.0


def test_probabilistic_until():
    db = climb_walk_db()
    res = align(db, CU_W, k=None)
    assert res.score == pytest.approx(0.72, abs=1e-12)
    assert res.grad[0] == pytest.approx(0.8)
    assert res.grad[1] == pytest.approx(0.9)
    assert abs(res.score - exact_align(db, CU_W)) < 1e-9
    assert fd_grad(db, CU_W, 0) == pytest.approx(0.8, rel=1e-6)


def test_result_invariants():
    res = align(climb_walk_db(), CU_W)
    assert set(res.grad) <= set(res.proofs.fact_ids())
    assert 0.0 <= res.score <= 1.0


def test_check_bool_rejects_probabilistic():
    with pytest.raises(NonDeterministicDatabase):
        check_bool(climb_walk_db(), CU_W)


def test_next_and_weak_next_at_end():
    db = trace_db("cw")
    assert align(db, parse_spec("X walk(M,right)", CW_SCHEMA)).score == 1.0
    assert align(db, parse_spec("X X walk(M,right)", CW_SCHEMA)).score == 0.0
    # !X X p is WeakNext WeakNext !p, vacuously true past the end
    assert align(db, parse_spec("!X X walk(M,right)", CW_SCHEMA)).score == 1.0


def test_always_and_finally():
    db = trace_db("ccw")
    assert align(db, parse_spec("F walk(M,right)", CW_SCHEMA)).score == 1.0
    assert align(db, parse_spec("G climb(M,up)", CW_SCHEMA)).score == 0.0
    assert align(db, parse_spec("G (climb(M,up) | walk(M,right))", CW_SCHEMA)).score == 1.0


def test_release_through_negation():
    # !(c U w) on [c, c] holds: walk never happens
    db = trace_db("cc")
    assert align(db, parse_spec("!(climb(M,_) U walk(M,right))", CW_SCHEMA)).score == 1.0
    assert align(trace_db("cw"),
                 parse_spec("!(climb(M,_) U walk(M,right))", CW_SCHEMA)).score == 0.0


def test_wildcard_expands_over_matches():
    db = FactDatabase.from_clip_scores(
        CW_SCHEMA, ["M"], 1, {("climb", 1, ("M", "up")): 0.5, ("climb", 1, ("M", "down")): 0.5})
    assert align(db, parse_spec("climb(M,_)", CW_SCHEMA), k=None).score == pytest.approx(0.75)


def test_existential_grounding():
    db = FactDatabase.from_clip_scores(
        BN_SCHEMA, ["a", "b"], 1, {("open", 1, ("a",)): 0.5, ("open", 1, ("b",)): 0.5})
    spec = parse_spec("exists x. open(x)", BN_SCHEMA)
    assert align(db, spec, k=None).score == pytest.approx(0.75)


def test_witness_scores():
    spec = parse_spec("F (walk(M,right))@w", CW_SCHEMA)
    res = align(trace_db("cww"), spec)
    assert res.witness_scores["w"] == {2: 1.0, 3: 1.0}


def test_unknown_witness_label_in_distance_scores():
    res = align(trace_db("cw"), CU_W)
    with pytest.raises(UnknownWitnessLabel):
        res.distance_scores("pre", "post")


# -- interval mode -------------------------------------------------------------

def test_interval_until():
    assert align_interval(trace_db("ccww"), CU_W).score == 1.0
    assert align_interval(trace_db("cwc"), CU_W).score == 0.0


def test_interval_atom_run():
    spec = parse_spec("climb(M,up)", CW_SCHEMA)
    assert align(trace_db("cc"), spec, mode=INTERVAL).score == 1.0
    assert align(trace_db("cw"), spec, mode=INTERVAL).score == 0.0


def test_interval_witnesses_are_pairs():
    spec = parse_spec("(climb(M,_))@a U (walk(M,right))@b", CW_SCHEMA)
    res = align(trace_db("ccww"), spec, mode=INTERVAL)
    assert res.witness_scores["a"] == {(1, 3): 1.0}
    assert res.witness_scores["b"] == {(3, 5): 1.0}


def test_interval_rejects_next():
    with pytest.raises(UnsupportedOperatorInIntervalMode):
        align(trace_db("cw"), parse_spec("X walk(M,right)", CW_SCHEMA), mode=INTERVAL)


# -- violation ----------------------------------------------------------------

def test_violation_open_closed():
    db = FactDatabase.from_clip_scores(
        BN_SCHEMA, ["e"], 1, {("open", 1, ("e",)): 0.6, ("closed", 1, ("e",)): 0.5})
    spec = parse_spec("exists x. G !(open(x) & closed(x))", BN_SCHEMA)
    assert violation_score(db, spec) == pytest.approx(0.30, abs=1e-12)


def test_violation_tautology_and_irrelevant():
    db = FactDatabase.from_clip_scores(BN_SCHEMA, ["e"], 1, {("open", 1, ("e",)): 0.6})
    assert violation_score(db, parse_spec("exists x. G !(open(x) & !open(x))", BN_SCHEMA)) == 0.0
    assert violation_score(db, parse_spec("exists x. G !(is-rigid(x) & is-fluid(x))",
                                          BN_SCHEMA)) == 0.0


# -- properties -------------------------------------------------------------------

def test_exact_mode_matches_oracle_suffix():
    rng = random.Random(11)
    for _ in range(150):
        db, spec = random_instance(rng)
        assert abs(align(db, spec, k=None).score - exact_align(db, spec)) < 1e-9


def test_exact_mode_matches_oracle_interval():
    rng = random.Random(12)
    for _ in range(150):
        db, spec = random_instance(rng, interval=True)
        got = align(db, spec, k=None, mode=INTERVAL).score
        assert abs(got - exact_align(db, spec, INTERVAL)) < 1e-9


def test_truncation_is_a_lower_bound():
    rng = random.Random(13)
    for _ in range(100):
        db, spec = random_instance(rng)
        exact = align(db, spec, k=None).score
        for k in (1, 3, 5):
            assert align(db, spec, k=k).score <= exact + 1e-12


def test_check_bool_agrees_with_align_and_nnf():
    rng = random.Random(14)
    for _ in range(150):
        db = random_db(rng, deterministic=True)
        _, spec = random_instance(rng)
        truth = check_bool(db, spec, SUFFIX)
        assert align(db, spec, k=None).score == float(truth)
        nnf = Specification(spec.quantified_vars, to_nnf(spec.body))
        assert check_bool(db, nnf, SUFFIX) == truth


def test_monotone_in_positive_evidence():
    rng = random.Random(15)
    checked = 0
    for _ in range(200):
        db, spec = random_instance(rng)
        res = align(db, spec, k=None)
        lits = [c for p in res.proofs for c in p.lits]
        for f in db.facts:
            if 2 * f.id in lits and 2 * f.id + 1 not in lits and f.prob < 0.9:
                bumped = db.with_probs([p + 0.1 if i == f.id else p
                                        for i, p in enumerate(db.probs)])
                assert align(bumped, spec, k=None).score >= res.score - 1e-12
                checked += 1
    assert checked > 20


def test_determinism():
    rng = random.Random(16)
    db, spec = random_instance(rng)
    a, b = align(db, spec), align(db, spec)
    assert a.score == b.score and a.grad == b.grad and a.proofs.dump() == b.proofs.dump()

