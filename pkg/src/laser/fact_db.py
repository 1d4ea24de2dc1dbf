"""Probabilistic relational database over clip-indexed facts."""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional

import numpy as np

from .errors import (
    DuplicateKey,
    GroundingExplosion,
    InvalidConfig,
    ProbOutOfRange,
    TimeOutOfRange,
    UnknownConstant,
    UnknownPredicate,
)

STATIC = "static"
EVOLVING = "evolving"
DEFAULT_GROUNDING_CAP = 10_000


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    arity: int
    kind: str = EVOLVING

    def __post_init__(self):
        if self.kind not in (STATIC, EVOLVING):
            raise InvalidConfig(f"predicate kind must be static or evolving, got {self.kind!r}")
        if self.arity < 1:
            raise InvalidConfig(f"predicate {self.name!r} needs arity >= 1")


class Schema:
    """Declared predicates with their arity and kind."""

    def __init__(self, predicates: Iterable):
        decls = []
        for p in predicates:
            if not isinstance(p, PredicateDecl):
                p = PredicateDecl(**p) if isinstance(p, Mapping) else PredicateDecl(*p)
            decls.append(p)
        self.predicates = tuple(decls)
        self._by_name = {p.name: p for p in self.predicates}
        if len(self._by_name) != len(self.predicates):
            raise InvalidConfig("predicate names must be unique")

    def __contains__(self, name):
        return name in self._by_name

    def __iter__(self):
        return iter(self.predicates)

    def __len__(self):
        return len(self.predicates)

    def __eq__(self, other):
        return isinstance(other, Schema) and self.predicates == other.predicates

    def __repr__(self):
        return f"Schema({list(self.predicates)!r})"

    def __getitem__(self, name) -> PredicateDecl:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownPredicate(f"unknown predicate {name!r}") from None

    def arity(self, name) -> int:
        return self[name].arity

    def is_static(self, name) -> bool:
        return self[name].kind == STATIC

    def to_json(self):
        return [{"name": p.name, "arity": p.arity, "kind": p.kind} for p in self.predicates]

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Fact(NamedTuple):
    id: int
    predicate: str
    time: Optional[int]
    args: tuple
    prob: float


def _normalize_key(schema, num_clips, key):
    pred, time, args = key
    pred = str(pred).strip()
    decl = schema[pred]
    args = tuple(str(a).strip() for a in args)
    if len(args) != decl.arity:
        raise InvalidConfig(f"{pred} expects {decl.arity} argument(s), got {len(args)}")
    if decl.kind == STATIC:
        if time is not None:
            raise InvalidConfig(f"static predicate {pred} cannot carry a time step")
    else:
        if time is None:
            raise InvalidConfig(f"evolving predicate {pred} needs a time step")
        time = int(time)
        if not 1 <= time <= num_clips:
            raise TimeOutOfRange(f"time {time} outside 1..{num_clips}")
    return pred, time, args


def _sort_key(key):
    pred, time, args = key
    return (pred, -1 if time is None else time, args)


class FactDatabase:
    """Immutable collection of independent probabilistic facts.

    Facts absent from the database have probability zero (closed world).
    Fact ids are dense, assigned in lexicographic (predicate, time, args)
    order with static facts sorting before time step 1.
    """

    def __init__(self, schema: Schema, num_clips: int, entities, facts, values=()):
        if num_clips < 1:
            raise InvalidConfig("num_clips must be >= 1")
        self.schema = schema
        self.num_clips = int(num_clips)
        self.entities = tuple(sorted(set(entities)))
        self.values = tuple(sorted(set(values) - set(self.entities)))
        self.facts = tuple(facts)
        known = set(self.entities) | set(self.values)
        self._index = {}
        self._by_slot = {}
        for i, f in enumerate(self.facts):
            if f.id != i:
                raise InvalidConfig("fact ids must be dense and ordered")
            if not 0.0 <= f.prob <= 1.0:
                raise ProbOutOfRange(f"probability {f.prob} of fact {i} outside [0, 1]")
            for a in f.args:
                if a not in known:
                    raise UnknownConstant(f"constant {a!r} is neither an entity nor a value")
            key = (f.predicate, f.time, f.args)
            if key in self._index:
                raise DuplicateKey(f"duplicate fact {key}")
            self._index[key] = i
            self._by_slot.setdefault((f.predicate, f.time), []).append(i)
        self.probs = np.array([f.prob for f in self.facts], dtype=float)
        self.probs.setflags(write=False)

    # construction ---------------------------------------------------------

    @classmethod
    def from_clip_scores(cls, schema, entities, num_clips, scores, values=None):
        """Build a database from ``(predicate, time, args) -> prob`` scores.

        ``scores`` may be a mapping or an iterable of ``(key, prob)`` pairs;
        keys that normalise to the same fact raise :class:`DuplicateKey`.
        """
        items = scores.items() if isinstance(scores, Mapping) else scores
        table = {}
        for key, prob in items:
            nkey = _normalize_key(schema, num_clips, key)
            prob = float(prob)
            if not 0.0 <= prob <= 1.0:
                raise ProbOutOfRange(f"probability {prob} for {nkey} outside [0, 1]")
            if nkey in table:
                raise DuplicateKey(f"fact {nkey} given twice")
            table[nkey] = prob
        entities = set(entities)
        if values is None:
            values = {a for (_, _, args) in table for a in args} - entities
        ordered = sorted(table, key=_sort_key)
        facts = [Fact(i, p, t, a, table[(p, t, a)]) for i, (p, t, a) in enumerate(ordered)]
        return cls(schema, num_clips, entities, facts, values)

    def with_probs(self, probs) -> "FactDatabase":
        """Same facts and ids, new probabilities."""
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (len(self.facts),):
            raise InvalidConfig("probability vector does not match fact count")
        new = object.__new__(FactDatabase)
        new.__dict__.update(self.__dict__)
        new.facts = tuple(f._replace(prob=float(p)) for f, p in zip(self.facts, probs))
        if np.any((probs < 0) | (probs > 1)):
            raise ProbOutOfRange("probabilities must lie in [0, 1]")
        new.probs = probs.copy()
        new.probs.setflags(write=False)
        return new

    # queries --------------------------------------------------------------

    def __len__(self):
        return len(self.facts)

    def _check_time(self, t):
        if not 1 <= t <= self.num_clips:
            raise TimeOutOfRange(f"time {t} outside 1..{self.num_clips}")

    def lookup(self, predicate, args, t):
        """Return ``(fact_id, prob)`` for a ground atom at clip ``t``, or None."""
        decl = self.schema[predicate]
        self._check_time(t)
        key = (predicate, None if decl.kind == STATIC else t, tuple(args))
        i = self._index.get(key)
        if i is None:
            return None
        return i, self.facts[i].prob

    def match(self, predicate, pattern, t):
        """Fact ids at ``t`` whose args agree with ``pattern`` (None = any)."""
        decl = self.schema[predicate]
        time = None if decl.kind == STATIC else t
        if None not in pattern:
            i = self._index.get((predicate, time, tuple(pattern)))
            return [] if i is None else [i]
        out = []
        for i in self._by_slot.get((predicate, time), ()):
            args = self.facts[i].args
            if all(p is None or p == a for p, a in zip(pattern, args)):
                out.append(i)
        return out

    def groundings(self, variables, cap=DEFAULT_GROUNDING_CAP):
        """Every map from ``variables`` to entities, in lexicographic order."""
        variables = tuple(variables)
        total = len(self.entities) ** len(variables)
        if total > cap:
            raise GroundingExplosion(
                f"{len(self.entities)}^{len(variables)} = {total} groundings exceed cap {cap}"
            )
        return [dict(zip(variables, combo))
                for combo in itertools.product(self.entities, repeat=len(variables))]

    def is_deterministic(self):
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    # serialisation --------------------------------------------------------

    def to_json(self):
        return {
            "num_clips": self.num_clips,
            "entities": list(self.entities),
            "values": list(self.values),
            "schema": self.schema.to_json(),
            "facts": [
                {"prob": f.prob, "pred": f.predicate, "time": f.time, "args": list(f.args)}
                for f in self.facts
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, obj):
        schema = Schema(obj["schema"])
        facts = [
            Fact(i, d["pred"], d["time"], tuple(d["args"]), float(d["prob"]))
            for i, d in enumerate(obj["facts"])
        ]
        return cls(schema, obj["num_clips"], obj["entities"], facts, obj.get("values", ()))

    @classmethod
    def loads(cls, text):
        return cls.from_json(json.loads(text))


def lookup(db: FactDatabase, atom, t):
    """Module-level form of :meth:`FactDatabase.lookup` for ground atoms."""
    from .spec_lang import Const

    args = []
    for term in atom.args:
        if not isinstance(term, Const):
            raise InvalidConfig("lookup needs a ground atom")
        args.append(term.name)
    return db.lookup(atom.predicate, args, t)


def from_clip_scores(schema, entities, num_clips, scores, values=None):
    return FactDatabase.from_clip_scores(schema, entities, num_clips, scores, values)


def groundings(db: FactDatabase, spec, cap=DEFAULT_GROUNDING_CAP):
    return db.groundings(spec.quantified_vars, cap)
