import os

import pytest

from laser.fact_db import FactDatabase, PredicateDecl, Schema

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

CW_SCHEMA = Schema([PredicateDecl("climb", 2), PredicateDecl("walk", 2)])

BN_SCHEMA = Schema([
    PredicateDecl("on", 2),
    PredicateDecl("touching", 2),
    PredicateDecl("above", 2),
    PredicateDecl("open", 1),
    PredicateDecl("closed", 1),
    PredicateDecl("is-bendable", 1, "static"),
    PredicateDecl("is-rigid", 1, "static"),
    PredicateDecl("is-fluid", 1, "static"),
])


def fixture_path(name):
    return os.path.join(FIXTURES, name)


def trace_db(letters, prob=1.0):
    """Deterministic climb/walk trace from a string such as ``"ccww"``."""
    scores = {}
    for t, ch in enumerate(letters, start=1):
        pred = {"c": "climb", "w": "walk"}[ch]
        direction = "up" if ch == "c" else "right"
        scores[(pred, t, ("M", direction))] = prob
    return FactDatabase.from_clip_scores(CW_SCHEMA, ["M"], len(letters), scores,
                                         values=["up", "right"])


def climb_walk_db(p_climb=0.9, p_walk=0.8):
    return FactDatabase.from_clip_scores(
        CW_SCHEMA, ["M"], 2,
        {("climb", 1, ("M", "up")): p_climb, ("walk", 2, ("M", "right")): p_walk},
        values=["up", "right"])


@pytest.fixture
def cw_schema():
    return CW_SCHEMA


@pytest.fixture
def bn_schema():
    return BN_SCHEMA


@pytest.fixture
def cw_db():
    return climb_walk_db()
