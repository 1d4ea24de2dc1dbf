"""Random small databases and specifications for property checks."""
from __future__ import annotations

import itertools
import random

from .fact_db import FactDatabase, PredicateDecl, Schema
from .spec_lang import (
    Always,
    And,
    Atom,
    Const,
    Finally,
    Next,
    Not,
    Or,
    Specification,
    Until,
    Var,
    WILDCARD,
)

FUZZ_SCHEMA = Schema([
    PredicateDecl("p", 1),
    PredicateDecl("q", 1),
    PredicateDecl("r", 2),
    PredicateDecl("s", 1, "static"),
])
FUZZ_ENTITIES = ("a", "b")


def random_db(rng: random.Random, max_clips=4, max_facts=8, deterministic=False, focus=()):
    """Random database; predicates named in ``focus`` are sampled more often."""
    m = rng.randint(1, max_clips)
    keys, weights = [], []
    for decl in FUZZ_SCHEMA:
        times = [None] if decl.kind == "static" else range(1, m + 1)
        for t in times:
            for args in itertools.product(FUZZ_ENTITIES, repeat=decl.arity):
                keys.append((decl.name, t, args))
                weights.append(6.0 if decl.name in focus else 1.0)
    want = min(len(keys), rng.randint(1, max_facts))
    chosen = []
    while len(chosen) < want:
        k = rng.choices(keys, weights)[0]
        if k not in chosen:
            chosen.append(k)
    if deterministic:
        scores = {k: float(rng.random() < 0.5) for k in chosen}
    else:
        scores = {k: round(rng.uniform(0.05, 0.95), 3) for k in chosen}
    return FactDatabase.from_clip_scores(FUZZ_SCHEMA, FUZZ_ENTITIES, m, scores, values=())


def _random_atom(rng, variables):
    decl = rng.choice(FUZZ_SCHEMA.predicates)
    args = []
    for _ in range(decl.arity):
        roll = rng.random()
        if variables and roll < 0.45:
            args.append(Var(rng.choice(variables)))
        elif roll < 0.8:
            args.append(Const(rng.choice(FUZZ_ENTITIES)))
        else:
            args.append(WILDCARD)
    return Atom(decl.name, tuple(args))


def random_formula(rng, depth, variables, interval=False):
    if depth == 0 or rng.random() < 0.15:
        atom = _random_atom(rng, variables)
        return Not(atom) if rng.random() < 0.25 else atom
    sub = lambda: random_formula(rng, depth - 1, variables, interval)  # noqa: E731
    if interval:
        choice = rng.choice(["and", "or", "until", "until", "always", "bfinally"])
    else:
        choice = rng.choice(["and", "or", "until", "not", "next", "always", "finally"])
    if choice == "and":
        return And(sub(), sub())
    if choice == "or":
        return Or(sub(), sub())
    if choice == "until":
        return Until(sub(), sub())
    if choice == "not":
        return Not(sub())
    if choice == "next":
        return Next(sub())
    if choice == "always":
        return Always(sub())
    if choice == "finally":
        return Finally(sub())
    # binary finally F(a & F b), counts as one level
    return Finally(And(sub(), Finally(sub())))


def random_spec(rng: random.Random, max_depth=3, interval=False, allow_vars=True):
    variables = ["x"] if allow_vars and rng.random() < 0.5 else []
    body = random_formula(rng, rng.randint(1, max_depth), variables, interval)
    used = sorted({t.name for n in _atoms(body) for t in n.args if isinstance(t, Var)})
    return Specification(tuple(used), body)


def _atoms(f):
    from .spec_lang import walk

    return [n for n in walk(f) if isinstance(n, Atom)]


def random_instance(rng: random.Random, interval=False, max_depth=3, **kw):
    spec = random_spec(rng, max_depth=max_depth, interval=interval)
    focus = {n.predicate for n in _atoms(spec.body)}
    return random_db(rng, focus=focus, **kw), spec
