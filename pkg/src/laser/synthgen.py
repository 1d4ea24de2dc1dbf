"""Seeded synthetic episodes for the two experimental regimes.

``mugen_like`` episodes are action chains (one action per clip, contiguous
segments) paired with until-chain specifications. ``bn20_like`` episodes
show one object manipulation whose pre-condition holds early and whose
post-condition holds late, paired with ``F (pre & F post)`` specifications.

Features are noisy indicator vectors of the true facts, laid out in blocks
that the linear predictor in :mod:`laser.predictor` reads back.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidConfig
from .fact_db import EVOLVING, STATIC, FactDatabase, PredicateDecl, Schema
from .spec_lang import (
    And,
    Atom,
    Const,
    Specification,
    Var,
    build_action_chain_spec,
    build_pre_post_spec,
    parse_spec,
)

MUGEN = "mugen_like"
BN20 = "bn20_like"
REGIMES = (MUGEN, BN20)
# feature noise when none is configured. Positive facts are sparse in the
# pre/post regime; at sigma 0.5 even the Bayes-optimal per-fact classifier
# reaches a mean F1 of only about 0.33 there (about 0.89 at 0.25).
DEFAULT_SIGMA = {MUGEN: 0.5, BN20: 0.25}

# scope of a classification head: one prediction per clip, per entity,
# per ordered entity pair, or per entity for the whole episode
CLIP, ENTITY, PAIR, STATIC_SCOPE = "clip", "entity", "pair", "static"


@dataclass(frozen=True)
class Head:
    name: str
    scope: str
    activation: str  # "softmax" or "sigmoid"
    classes: tuple  # (predicate, constant args) for clip heads, predicate names otherwise

    @property
    def size(self):
        return len(self.classes)


class TaskLayout:
    """Schema, heads and feature blocks shared by generator and predictor."""

    def __init__(self, schema, entities, values, heads, num_clips):
        self.schema = schema
        self.entities = tuple(entities)
        self.values = tuple(values)
        self.heads = tuple(heads)
        self.num_clips = num_clips
        self.instances = {}
        for h in self.heads:
            if h.scope == CLIP:
                self.instances[h.name] = [()]
            elif h.scope in (ENTITY, STATIC_SCOPE):
                self.instances[h.name] = [(e,) for e in self.entities]
            else:
                self.instances[h.name] = [
                    (a, b) for a, b in itertools.product(self.entities, repeat=2) if a != b
                ]
        # feature blocks: per head, per instance, head.size columns
        self.blocks = {}
        col = 0
        for h in self.heads:
            n = len(self.instances[h.name])
            self.blocks[h.name] = (col, n, h.size)
            col += n * h.size
        self.feature_dim = col
        self._build_template()

    def fact_key(self, head, inst, c, t):
        if head.scope == CLIP:
            pred, args = head.classes[c]
            return pred, t, tuple(args)
        pred = head.classes[c]
        return pred, (None if head.scope == STATIC_SCOPE else t), tuple(inst)

    def _build_template(self):
        scores = {}
        m = self.num_clips
        for h in self.heads:
            for inst in self.instances[h.name]:
                for c in range(h.size):
                    times = [None] if h.scope == STATIC_SCOPE else range(1, m + 1)
                    for t in times:
                        scores[self.fact_key(h, inst, c, t)] = 0.5
        self.template = FactDatabase.from_clip_scores(
            self.schema, self.entities, m, scores, values=self.values
        )
        # fact ids laid out as (clips, instances, classes) or (instances, classes)
        self.fact_ids = {}
        for h in self.heads:
            insts = self.instances[h.name]
            if h.scope == STATIC_SCOPE:
                ids = np.empty((len(insts), h.size), dtype=int)
                for a, inst in enumerate(insts):
                    for c in range(h.size):
                        ids[a, c] = self.template._index[self.fact_key(h, inst, c, None)]
            else:
                ids = np.empty((m, len(insts), h.size), dtype=int)
                for t in range(1, m + 1):
                    for a, inst in enumerate(insts):
                        for c in range(h.size):
                            ids[t - 1, a, c] = self.template._index[self.fact_key(h, inst, c, t)]
            self.fact_ids[h.name] = ids

    def head(self, name) -> Head:
        for h in self.heads:
            if h.name == name:
                return h
        raise KeyError(name)

    def head_features(self, features, head):
        """Slice ``features`` (m, F) into (m, instances, head.size)."""
        col, n, size = self.blocks[head.name]
        block = features[:, col:col + n * size]
        return block.reshape(features.shape[0], n, size)

    def database(self, probs) -> FactDatabase:
        return self.template.with_probs(probs)

    def truth_to_features(self, truth_probs, rng, sigma):
        """Noisy indicator features of a truth vector over the template facts."""
        m = self.num_clips
        feats = np.zeros((m, self.feature_dim))
        for h in self.heads:
            col, n, size = self.blocks[h.name]
            ids = self.fact_ids[h.name]
            if h.scope == STATIC_SCOPE:
                bits = np.broadcast_to(truth_probs[ids], (m,) + ids.shape)
            else:
                bits = truth_probs[ids]
            feats[:, col:col + n * size] = bits.reshape(m, n * size)
        if sigma > 0:
            feats = feats + rng.normal(0.0, sigma, size=feats.shape)
        return feats


# ---------------------------------------------------------------------------
# Configuration and episodes

@dataclass
class GenConfig:
    seed: int = 0
    regime: str = MUGEN
    m: int = 8
    num_actions: int = 6
    num_entities: Optional[int] = None  # regime default: 1 (mugen_like), 3 (bn20_like)
    feature_dim: Optional[int] = None
    feature_noise_sigma: Optional[float] = None  # regime default, see DEFAULT_SIGMA
    num_episodes: int = 100
    first_episode: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvalidConfig(f"regime must be one of {REGIMES}")
        if self.num_entities is None:
            self.num_entities = 1 if self.regime == MUGEN else 3
        if self.feature_noise_sigma is None:
            self.feature_noise_sigma = DEFAULT_SIGMA[self.regime]
        for name in ("m", "num_actions", "num_entities", "num_episodes"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.feature_noise_sigma < 0:
            raise InvalidConfig("feature_noise_sigma must be >= 0")
        if self.regime == MUGEN and self.num_actions > len(MUGEN_ACTIONS):
            raise InvalidConfig(f"at most {len(MUGEN_ACTIONS)} actions available")

    def to_json(self):
        return asdict(self)


@dataclass
class Episode:
    id: str
    num_clips: int
    ground_truth: FactDatabase
    features: np.ndarray
    spec: Specification
    witness_truth: Dict[str, int] = field(default_factory=dict)
    layout: Optional[TaskLayout] = field(default=None, repr=False, compare=False)

    def to_json(self):
        return {
            "features": self.features.tolist(),
            "truth_db": self.ground_truth.to_json(),
            "spec": str(self.spec),
            "witness_truth": dict(self.witness_truth),
        }


def _episode_rng(seed, index):
    # counter-based: episode i depends only on (seed, i)
    return np.random.default_rng([seed, index])


# ---------------------------------------------------------------------------
# MUGEN-like action chains

AGENT = "M"
MUGEN_ACTIONS = ("walk", "jump", "kill", "collect", "die", "climb")
DIRECTIONS = ("left", "right", "up", "down")
# directions each action can actually take; the other pairs are never
# generated and are excluded by the integrity constraints
VALID_DIRECTIONS = {
    "walk": ("left", "right"),
    "jump": ("left", "right", "up", "down"),
    "kill": ("left", "right"),
    "collect": ("up", "down"),
    "die": ("down",),
    "climb": ("up", "down"),
}


def mugen_layout(m, num_actions=6) -> TaskLayout:
    """One softmax head over every (action, direction) pair."""
    actions = MUGEN_ACTIONS[:num_actions]
    schema = Schema([PredicateDecl(a, 2, EVOLVING) for a in actions])
    classes = tuple((a, (AGENT, d)) for a in actions for d in DIRECTIONS)
    head = Head("action", CLIP, "softmax", classes)
    return TaskLayout(schema, [AGENT], list(DIRECTIONS), [head], m)


def mugen_constraints(layout, weight=1.0):
    """Invalid (action, direction) pairs never happen."""
    text = [f"G !{a}({AGENT},{d})" for a, (_, d) in layout.head("action").classes
            if d not in VALID_DIRECTIONS[a]]
    return [(parse_spec(t, layout.schema), weight) for t in text]


def mugen_episode(layout, plan, rng, sigma, episode_id="ep"):
    """Build an episode from ``plan``: a list of ((action, modifier), (start, end))."""
    m = layout.num_clips
    head = layout.head("action")
    truth = np.zeros(len(layout.template))
    covered = []
    atoms = []
    for (action, mod), (start, end) in plan:
        c = head.classes.index((action, (AGENT, mod)))
        for t in range(start, end + 1):
            truth[layout.fact_ids["action"][t - 1, 0, c]] = 1.0
            covered.append(t)
        atoms.append(Atom(action, (Const(AGENT), Const(mod))))
    if sorted(covered) != list(range(1, m + 1)):
        raise InvalidConfig("segments must cover clips 1..m exactly once")
    spec = build_action_chain_spec(atoms)
    feats = layout.truth_to_features(truth, rng, sigma)
    witness = {f"act_{i}": seg[0] for i, (_, seg) in enumerate(plan, start=1)}
    return Episode(episode_id, m, layout.database(truth), feats, spec, witness, layout)


def gen_mugen_like(cfg: GenConfig) -> List[Episode]:
    if cfg.regime != MUGEN:
        raise InvalidConfig("gen_mugen_like needs regime mugen_like")
    layout = mugen_layout(cfg.m, cfg.num_actions)
    _check_feature_dim(cfg, layout)
    head = layout.head("action")
    pairs = [(p, args[1]) for p, args in head.classes if args[1] in VALID_DIRECTIONS[p]]
    out = []
    for idx in range(cfg.first_episode, cfg.first_episode + cfg.num_episodes):
        rng = _episode_rng(cfg.seed, idx)
        n = int(rng.integers(1, min(3, cfg.m) + 1))
        chosen = []
        while len(chosen) < n:
            pick = pairs[int(rng.integers(len(pairs)))]
            if not chosen or pick != chosen[-1]:
                chosen.append(pick)
        cuts = sorted(int(c) for c in rng.choice(np.arange(2, cfg.m + 1), size=n - 1, replace=False))
        starts = [1] + cuts
        ends = [s - 1 for s in cuts] + [cfg.m]
        plan = list(zip(chosen, zip(starts, ends)))
        out.append(mugen_episode(layout, plan, rng, cfg.feature_noise_sigma, f"mugen-{idx:05d}"))
    return out


# ---------------------------------------------------------------------------
# 20BN-like pre/post-condition episodes

BN_STATIC = ("is-holdable", "is-bendable", "is-tearable")
BN_UNARY = ("open", "closed", "deformed", "upright", "torn")
BN_BINARY = ("on", "touching", "above", "next-to", "in")


@dataclass(frozen=True)
class Template:
    """An action given by its pre- and post-condition over v1, v2, ...

    Both conditions are conjunctions of (possibly negated) atoms written in
    the spec language. The positive atoms form the start and end states.
    """
    name: str
    arity: int
    pre: str
    post: str

    @property
    def variables(self):
        return [f"v{i}" for i in range(1, self.arity + 1)]

    def condition(self, which, schema):
        text = self.pre if which == "pre" else self.post
        return parse_spec(f"exists {', '.join(self.variables)}. {text}", schema).body

    def positive_atoms(self, which, schema):
        out, stack = [], [self.condition(which, schema)]
        while stack:
            f = stack.pop()
            if isinstance(f, And):
                stack.extend([f.right, f.left])
            elif isinstance(f, Atom):
                out.append(f)
        return out


# Conditions list the facts an action needs and creates, plus the negation
# of what it has yet to create (pre) or has removed (post).
TEMPLATES = (
    Template("push-off-surface", 3,
             "on(v1,v2) & above(v1,v2) & touching(v1,v3) & !is-holdable(v2)",
             "!on(v1,v2) & !above(v1,v2) & !touching(v1,v3)"),
    Template("open", 1, "closed(v1) & !open(v1)", "open(v1) & !closed(v1)"),
    Template("close", 1, "open(v1) & !closed(v1)", "closed(v1) & !open(v1)"),
    Template("put-in", 2, "next-to(v1,v2) & is-holdable(v1) & !in(v1,v2)",
             "in(v1,v2) & !next-to(v1,v2)"),
    Template("bend", 1, "upright(v1) & is-bendable(v1) & !deformed(v1)",
             "deformed(v1) & !upright(v1)"),
    Template("tear", 2, "touching(v2,v1) & is-tearable(v1) & !torn(v1)",
             "torn(v1) & !touching(v2,v1)"),
    Template("stack", 2, "next-to(v1,v2) & !is-bendable(v2) & !is-tearable(v1) & !on(v1,v2)",
             "on(v1,v2) & above(v1,v2) & !next-to(v1,v2)"),
)

# common-sense exclusions; every generated ground truth satisfies all of them
BN_CONSTRAINTS = (
    "exists x. G !(open(x) & closed(x))",
    "exists x. G !(upright(x) & deformed(x))",
    "exists x. G !(deformed(x) & !is-bendable(x))",
    "exists x. G !(torn(x) & !is-tearable(x))",
    "exists x, y. G !(in(x,y) & on(x,y))",
    "exists x, y. G !(in(x,y) & next-to(x,y))",
    "exists x, y. G !(on(x,y) & next-to(x,y))",
    "exists x, y. G !(above(x,y) & next-to(x,y))",
    "exists x, y. G !(on(x,y) & on(y,x))",
    "exists x, y. G !(in(x,y) & in(y,x))",
    "exists x, y. G !(above(x,y) & above(y,x))",
)


def bn20_layout(m, num_entities=3) -> TaskLayout:
    decls = [PredicateDecl(p, 1, STATIC) for p in BN_STATIC]
    decls += [PredicateDecl(p, 1, EVOLVING) for p in BN_UNARY]
    decls += [PredicateDecl(p, 2, EVOLVING) for p in BN_BINARY]
    heads = [
        Head("static", STATIC_SCOPE, "sigmoid", BN_STATIC),
        Head("unary", ENTITY, "sigmoid", BN_UNARY),
        Head("binary", PAIR, "sigmoid", BN_BINARY),
    ]
    entities = [f"e{i}" for i in range(num_entities)]
    return TaskLayout(Schema(decls), entities, (), heads, m)


def bn20_constraints(layout, weight=1.0):
    return [(parse_spec(t, layout.schema), weight) for t in BN_CONSTRAINTS]


def bn20_episode(layout, template, binding, t_pre, t_post, rng, sigma, episode_id="ep"):
    """Pre-condition atoms hold at clips <= t_pre, post-condition atoms at
    clips >= t_post; clips in between keep only atoms common to both."""
    m = layout.num_clips
    if not 1 <= t_pre < t_post <= m:
        raise InvalidConfig("need 1 <= t_pre < t_post <= m")
    idx = layout.template._index
    truth = np.zeros(len(layout.template))
    schema = layout.schema
    phases = {}
    for which in ("pre", "post"):
        phases[which] = set()
        for atom in template.positive_atoms(which, schema):
            args = tuple(binding[t.name] if isinstance(t, Var) else t.name for t in atom.args)
            if schema.is_static(atom.predicate):
                truth[idx[(atom.predicate, None, args)]] = 1.0
            else:
                phases[which].add((atom.predicate, args))
    for t in range(1, m + 1):
        if t <= t_pre:
            state = phases["pre"]
        elif t >= t_post:
            state = phases["post"]
        else:
            state = phases["pre"] & phases["post"]
        for pred, args in state:
            truth[idx[(pred, t, args)]] = 1.0
    pre, post = template.condition("pre", schema), template.condition("post", schema)
    used = sorted({t.name for f in (pre, post) for t in _vars(f)})
    spec = build_pre_post_spec(pre, post, used)
    feats = layout.truth_to_features(truth, rng, sigma)
    witness = {"pre": t_pre, "post": t_post}
    return Episode(episode_id, m, layout.database(truth), feats, spec, witness, layout)


def _vars(f):
    from .spec_lang import walk

    return [t for n in walk(f) if isinstance(n, Atom) for t in n.args if isinstance(t, Var)]


def gen_20bn_like(cfg: GenConfig, templates: Sequence[Template] = TEMPLATES) -> List[Episode]:
    if cfg.regime != BN20:
        raise InvalidConfig("gen_20bn_like needs regime bn20_like")
    if cfg.m < 2:
        raise InvalidConfig("pre/post episodes need at least two clips")
    need = max(t.arity for t in templates)
    if cfg.num_entities < need:
        raise InvalidConfig(f"templates need {need} entities, got {cfg.num_entities}")
    layout = bn20_layout(cfg.m, cfg.num_entities)
    _check_feature_dim(cfg, layout)
    third = max(1, cfg.m // 3)
    out = []
    for idx in range(cfg.first_episode, cfg.first_episode + cfg.num_episodes):
        rng = _episode_rng(cfg.seed, idx)
        template = templates[int(rng.integers(len(templates)))]
        ents = list(rng.permutation(layout.entities))
        binding = {f"v{i}": str(ents[i - 1]) for i in range(1, template.arity + 1)}
        t_pre = int(rng.integers(1, third + 1))
        lo = max(t_pre + 1, cfg.m - third + 1)
        t_post = int(rng.integers(lo, cfg.m + 1))
        out.append(bn20_episode(layout, template, binding, t_pre, t_post, rng,
                                cfg.feature_noise_sigma, f"bn20-{idx:05d}"))
    return out


def _check_feature_dim(cfg, layout):
    if cfg.feature_dim is not None and cfg.feature_dim != layout.feature_dim:
        raise InvalidConfig(
            f"feature_dim {cfg.feature_dim} does not match layout dimension {layout.feature_dim}"
        )


def layout_for(cfg: GenConfig) -> TaskLayout:
    if cfg.regime == MUGEN:
        return mugen_layout(cfg.m, cfg.num_actions)
    return bn20_layout(cfg.m, cfg.num_entities)


def constraints_for(cfg: GenConfig, weight=1.0):
    layout = layout_for(cfg)
    if cfg.regime == MUGEN:
        return mugen_constraints(layout, weight)
    return bn20_constraints(layout, weight)


def generate(cfg: GenConfig) -> List[Episode]:
    if cfg.regime == MUGEN:
        return gen_mugen_like(cfg)
    return gen_20bn_like(cfg)


# ---------------------------------------------------------------------------
# Dataset directories

def save_dataset(path, cfg: GenConfig, episodes: Sequence[Episode]):
    os.makedirs(os.path.join(path, "episodes"), exist_ok=True)
    manifest = {"config": cfg.to_json(), "episodes": [ep.id for ep in episodes]}
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    for ep in episodes:
        with open(os.path.join(path, "episodes", f"{ep.id}.json"), "w") as fh:
            json.dump(ep.to_json(), fh, sort_keys=True)
            fh.write("\n")


def load_dataset(path) -> Tuple[GenConfig, List[Episode]]:
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    cfg = GenConfig(**manifest["config"])
    layout = layout_for(cfg)
    episodes = []
    for eid in manifest["episodes"]:
        with open(os.path.join(path, "episodes", f"{eid}.json")) as fh:
            obj = json.load(fh)
        truth = FactDatabase.from_json(obj["truth_db"])
        feats = np.asarray(obj["features"], dtype=float)
        spec = parse_spec(obj["spec"], truth.schema)
        episodes.append(Episode(eid, truth.num_clips, truth, feats, spec,
                                obj.get("witness_truth", {}), layout))
    return cfg, episodes
