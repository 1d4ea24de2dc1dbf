import random

import pytest

from laser.errors import (
    DuplicateKey,
    GroundingExplosion,
    ProbOutOfRange,
    TimeOutOfRange,
    UnknownConstant,
    UnknownPredicate,
)
from laser.fact_db import (
    Fact,
    FactDatabase,
    PredicateDecl,
    Schema,
    from_clip_scores,
    groundings,
    lookup,
)
from laser.fuzz import random_db
from laser.spec_lang import Atom, Const, parse_spec

SCHEMA = Schema([
    PredicateDecl("walk", 2),
    PredicateDecl("is-bendable", 1, "static"),
    PredicateDecl("on", 2),
])


def ground(pred, *args):
    return Atom(pred, tuple(Const(a) for a in args))


@pytest.fixture
def db():
    return from_clip_scores(
        SCHEMA, ["M", "e"], 8,
        {("walk", 3, ("M", "right")): 0.92, ("is-bendable", None, ("e",)): 0.95},
        values=["right", "left"])


def test_lookup_evolving(db):
    fid, p = lookup(db, ground("walk", "M", "right"), 3)
    assert p == 0.92
    assert db.facts[fid].predicate == "walk"


def test_lookup_static_any_time(db):
    for t in range(1, 9):
        fid, p = lookup(db, ground("is-bendable", "e"), t)
        assert p == 0.95


def test_lookup_absent_is_closed_world(db):
    assert lookup(db, ground("walk", "M", "left"), 3) is None
    assert lookup(db, ground("walk", "M", "right"), 4) is None


def test_lookup_errors(db):
    with pytest.raises(TimeOutOfRange):
        lookup(db, ground("walk", "M", "right"), 9)
    with pytest.raises(UnknownPredicate):
        lookup(db, ground("jump", "M", "up"), 1)


def test_from_clip_scores_singleton():
    d = from_clip_scores(SCHEMA, ["M"], 2, {("walk", 1, ("M", "right")): 0.9})
    assert len(d) == 1
    assert d.facts[0] == Fact(0, "walk", 1, ("M", "right"), 0.9)


def test_prob_out_of_range():
    with pytest.raises(ProbOutOfRange):
        from_clip_scores(SCHEMA, ["M"], 2, {("walk", 1, ("M", "right")): 1.3})


def test_duplicate_key_after_normalisation():
    scores = [(("walk", 1, ("M", "right")), 0.5), ((" walk", "1", ["M", "right "]), 0.6)]
    with pytest.raises(DuplicateKey):
        from_clip_scores(SCHEMA, ["M"], 2, scores)


def test_unknown_constant_rejected():
    facts = [Fact(0, "walk", 1, ("M", "nowhere"), 0.5)]
    with pytest.raises(UnknownConstant):
        FactDatabase(SCHEMA, 2, ["M"], facts, values=["right"])


def test_ids_follow_lexicographic_order():
    scores = {("walk", 2, ("M", "right")): 0.1, ("on", 1, ("M", "e")): 0.2,
              ("is-bendable", None, ("e",)): 0.3, ("walk", 1, ("M", "right")): 0.4}
    d = from_clip_scores(SCHEMA, ["M", "e"], 2, scores)
    keys = [(f.predicate, f.time, f.args) for f in d.facts]
    assert keys == [("is-bendable", None, ("e",)), ("on", 1, ("M", "e")),
                    ("walk", 1, ("M", "right")), ("walk", 2, ("M", "right"))]
    # insertion order does not matter
    again = from_clip_scores(SCHEMA, ["M", "e"], 2, dict(reversed(list(scores.items()))))
    assert again.dumps() == d.dumps()


def test_json_round_trip(db):
    back = FactDatabase.loads(db.dumps())
    assert back.dumps() == db.dumps()
    obj = db.to_json()
    assert set(obj) == {"num_clips", "entities", "values", "schema", "facts"}
    assert set(obj["facts"][0]) == {"prob", "pred", "time", "args"}


def test_groundings_enumeration():
    d = from_clip_scores(SCHEMA, ["box", "desk"], 1, {})
    spec = parse_spec("exists v1. on(v1, v1)")
    assert groundings(d, spec) == [{"v1": "box"}, {"v1": "desk"}]


def test_groundings_no_vars():
    d = from_clip_scores(SCHEMA, ["box", "desk"], 1, {})
    assert groundings(d, parse_spec("on(box, desk)")) == [{}]


def test_groundings_explosion():
    d = from_clip_scores(SCHEMA, [f"e{i}" for i in range(10)], 1, {})
    spec = parse_spec("exists v1, v2, v3, v4, v5. on(v1,v2) & on(v3,v4) & on(v5,v5)")
    with pytest.raises(GroundingExplosion):
        groundings(d, spec)


def test_groundings_count_and_distinct():
    d = from_clip_scores(SCHEMA, ["a", "b", "c"], 1, {})
    gs = d.groundings(["x", "y"])
    assert len(gs) == 9
    assert len({tuple(sorted(g.items())) for g in gs}) == 9


def test_lookup_agrees_with_linear_scan():
    rng = random.Random(7)
    for _ in range(50):
        d = random_db(rng)
        for f in d.facts:
            times = range(1, d.num_clips + 1) if f.time is None else [f.time]
            for t in times:
                assert d.lookup(f.predicate, f.args, t) == (f.id, f.prob)
        for t in range(1, d.num_clips + 1):
            for pred in ("p", "q"):
                for e in d.entities:
                    scan = [f for f in d.facts if f.predicate == pred and f.time == t
                            and f.args == (e,)]
                    got = d.lookup(pred, (e,), t)
                    assert (got is None) == (not scan)


def test_with_probs_keeps_ids(db):
    new = db.with_probs([0.1, 0.2])
    assert [f.id for f in new.facts] == [f.id for f in db.facts]
    assert list(new.probs) == [0.1, 0.2]
    with pytest.raises(ProbOutOfRange):
        db.with_probs([0.1, 1.2])
