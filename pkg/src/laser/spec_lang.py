"""Temporal specification language: AST, parser, printer and NNF.

Concrete syntax::

    exists v1, v2. F ((on(v1,v2) & touching(v1,v3))@pre & F (!above(v1,v2))@post)

Operator precedence, tightest first: ``!``/``X``/``G``/``F``, then ``U``
(right associative), then ``&``, then ``|``. Any parenthesised subformula
may carry a witness label with an ``@name`` suffix.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence, Union

from .errors import (
    ArityMismatch,
    DuplicateWitnessLabel,
    EmptyActionList,
    SpecSyntaxError,
    TemporalOperatorInCondition,
    UnboundVariable,
    UnknownPredicate,
)

_SYMBOL = re.compile(r"[A-Za-z0-9_-]+\Z")
KEYWORDS = frozenset({"X", "G", "F", "U", "exists"})


# ---------------------------------------------------------------------------
# Terms and atoms

@dataclass(frozen=True)
class Const:
    name: str

    def __post_init__(self):
        _check_symbol(self.name)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        _check_symbol(self.name)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Wildcard:
    def __str__(self):
        return "_"


Term = Union[Const, Var, Wildcard]
WILDCARD = Wildcard()


def _check_symbol(name):
    if not isinstance(name, str) or not _SYMBOL.match(name) or name == "_":
        raise ValueError(f"invalid symbol {name!r}")


# ---------------------------------------------------------------------------
# Formulas. Every node may carry a witness label.

class Formula:
    label: Optional[str]

    @property
    def children(self) -> tuple:
        return ()

    def relabel(self, label):
        return replace(self, label=label)


@dataclass(frozen=True)
class Atom(Formula):
    predicate: str
    args: tuple = ()
    label: Optional[str] = None

    def __post_init__(self):
        _check_symbol(self.predicate)
        object.__setattr__(self, "args", tuple(self.args))

    def variables(self):
        return [t.name for t in self.args if isinstance(t, Var)]


@dataclass(frozen=True)
class _Unary(Formula):
    arg: Formula
    label: Optional[str] = None

    @property
    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class _Binary(Formula):
    left: Formula
    right: Formula
    label: Optional[str] = None

    @property
    def children(self):
        return (self.left, self.right)


class Not(_Unary):
    pass


class Next(_Unary):
    pass


class WeakNext(_Unary):
    pass


class Always(_Unary):
    pass


class Finally(_Unary):
    pass


class And(_Binary):
    pass


class Or(_Binary):
    pass


class Until(_Binary):
    pass


class Release(_Binary):
    pass


TEMPORAL = (Next, WeakNext, Always, Finally, Until, Release)


def walk(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def labels(f: Formula) -> list:
    return [n.label for n in walk(f) if n.label is not None]


def is_temporal(f: Formula) -> bool:
    return any(isinstance(n, TEMPORAL) for n in walk(f))


def depth(f: Formula) -> int:
    if not f.children:
        return 0
    return 1 + max(depth(c) for c in f.children)


@dataclass(frozen=True)
class Specification:
    quantified_vars: tuple
    body: Formula

    def __post_init__(self):
        qv = tuple(self.quantified_vars)
        object.__setattr__(self, "quantified_vars", qv)
        if len(set(qv)) != len(qv):
            raise ValueError(f"duplicate quantified variable in {qv}")
        bound = set(qv)
        for node in walk(self.body):
            if isinstance(node, Atom):
                for v in node.variables():
                    if v not in bound:
                        raise UnboundVariable(f"variable {v!r} is not quantified")
        seen = set()
        for lab in labels(self.body):
            if lab in seen:
                raise DuplicateWitnessLabel(f"witness label {lab!r} used twice")
            seen.add(lab)

    def __str__(self):
        return pretty_print(self)

    @property
    def key(self) -> str:
        """Identity key: equal iff the normalised specs are structurally equal."""
        return pretty_print(Specification(self.quantified_vars, to_nnf(self.body)))


# ---------------------------------------------------------------------------
# Printing

_UNARY_TOKEN = {Not: "!", Next: "X ", Always: "G ", Finally: "F ", WeakNext: "N "}
_BINARY_TOKEN = {And: "&", Or: "|", Until: "U", Release: "R"}


def format_formula(f: Formula) -> str:
    text = _format_bare(f)
    if f.label is not None:
        return f"({text})@{f.label}"
    return text


def _format_bare(f):
    if isinstance(f, Atom):
        return f"{f.predicate}({','.join(str(a) for a in f.args)})"
    if isinstance(f, _Unary):
        return f"{_UNARY_TOKEN[type(f)]}{_wrap(f.arg)}"
    return f"{_wrap(f.left)} {_BINARY_TOKEN[type(f)]} {_wrap(f.right)}"


def _wrap(f):
    text = format_formula(f)
    if f.label is not None or not isinstance(f, _Binary):
        return text
    return f"({text})"


def pretty_print(spec: Specification) -> str:
    body = format_formula(spec.body)
    if spec.quantified_vars:
        return f"exists {', '.join(spec.quantified_vars)}. {body}"
    return body


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z0-9_-]+)|(?P<punct>[()!&|,.@]))")


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = "ident" if m.group("ident") is not None else "punct"
        value = m.group(kind)
        start = m.start(kind)
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("eof", "", len(text.encode("utf-8"))))
    return tokens


class _Parser:
    def __init__(self, text, schema):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.schema = schema
        self.vars = ()

    # token helpers
    def peek(self):
        return self.toks[self.i]

    def offset(self):
        # byte offset of the current token
        kind, value, start = self.peek()
        if kind == "eof":
            return start
        return len(self.text[:start].encode("utf-8"))

    def accept(self, value):
        if self.peek()[1] == value and self.peek()[0] != "eof":
            self.i += 1
            return True
        return False

    def expect(self, value):
        if not self.accept(value):
            self.fail(f"expected {value!r}", [repr(value)])

    def fail(self, message, expected=()):
        tok = self.peek()
        found = "end of input" if tok[0] == "eof" else repr(tok[1])
        raise SpecSyntaxError(f"{message}, found {found}", self.offset(), expected)

    def ident(self, what):
        kind, value, _ = self.peek()
        if kind != "ident" or value in KEYWORDS:
            self.fail(f"expected {what}", [what])
        self.i += 1
        return value

    # grammar
    def spec(self):
        if self.peek()[:2] == ("ident", "exists"):
            self.i += 1
            names = [self.ident("variable")]
            while self.accept(","):
                names.append(self.ident("variable"))
            self.expect(".")
            if len(set(names)) != len(names):
                raise SpecSyntaxError("duplicate quantified variable", self.offset())
            self.vars = tuple(names)
        body = self.disj()
        if self.peek()[0] != "eof":
            self.fail("unexpected trailing input", ["'&'", "'|'", "'U'", "end of input"])
        return Specification(self.vars, body)

    def disj(self):
        left = self.conj()
        while self.accept("|"):
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.until()
        while self.accept("&"):
            left = And(left, self.until())
        return left

    def until(self):
        left = self.unary()
        if self.peek()[:2] == ("ident", "U"):
            self.i += 1
            return Until(left, self.until())
        return left

    def unary(self):
        kind, value, _ = self.peek()
        if (kind, value) == ("punct", "!"):
            self.i += 1
            return Not(self.unary())
        if kind == "ident" and value in ("X", "G", "F"):
            self.i += 1
            node = {"X": Next, "G": Always, "F": Finally}[value]
            return node(self.unary())
        return self.primary()

    def primary(self):
        kind, value, _ = self.peek()
        if (kind, value) == ("punct", "("):
            self.i += 1
            inner = self.disj()
            self.expect(")")
            if self.accept("@"):
                if inner.label is not None:
                    self.fail("subformula already labelled")
                inner = inner.relabel(self.ident("label"))
            return inner
        if kind == "ident" and value not in KEYWORDS:
            return self.atom()
        self.fail("expected an atom or '('", ["identifier", "'('", "'!'", "'X'", "'G'", "'F'"])

    def atom(self):
        at = self.offset()
        pred = self.ident("predicate")
        self.expect("(")
        args = [self.term()]
        while self.accept(","):
            args.append(self.term())
        self.expect(")")
        if self.schema is not None:
            if pred not in self.schema:
                raise UnknownPredicate(f"unknown predicate {pred!r} at offset {at}")
            arity = self.schema.arity(pred)
            if arity != len(args):
                raise ArityMismatch(
                    f"{pred} expects {arity} argument(s), got {len(args)} at offset {at}"
                )
        return Atom(pred, tuple(args))

    def term(self):
        kind, value, _ = self.peek()
        if kind == "ident" and value == "_":
            self.i += 1
            return WILDCARD
        name = self.ident("term")
        return Var(name) if name in self.vars else Const(name)


def parse_spec(text: str, schema=None) -> Specification:
    """Parse ``text``; with a ``schema``, predicates and arities are checked."""
    return _Parser(text, schema).spec()


def parse_formula(text: str, variables: Sequence[str] = (), schema=None) -> Formula:
    parser = _Parser(text, schema)
    parser.vars = tuple(variables)
    body = parser.disj()
    if parser.peek()[0] != "eof":
        parser.fail("unexpected trailing input")
    return body


# ---------------------------------------------------------------------------
# Negation normal form

def to_nnf(f: Formula) -> Formula:
    """Push negations down to atoms using the finite-trace dualities."""
    return _nnf(f, False)


def _nnf(f, negate):
    lab = f.label
    if isinstance(f, Atom):
        return Not(f.relabel(None), label=lab) if negate else f
    if isinstance(f, Not):
        inner = _nnf(f.arg, not negate)
        if lab is not None and inner.label is None:
            inner = inner.relabel(lab)
        return inner
    if isinstance(f, _Unary):
        kind = type(f)
        if negate:
            kind = {Next: WeakNext, WeakNext: Next, Always: Finally, Finally: Always}[kind]
        return kind(_nnf(f.arg, negate), label=lab)
    kind = type(f)
    if negate:
        kind = {And: Or, Or: And, Until: Release, Release: Until}[kind]
    return kind(_nnf(f.left, negate), _nnf(f.right, negate), label=lab)


def negate(spec: Specification) -> Specification:
    """Negate the body, keeping the variable list (used for constraints)."""
    return Specification(spec.quantified_vars, Not(spec.body))


# ---------------------------------------------------------------------------
# Spec builders used by the experiments

def build_pre_post_spec(pre: Formula, post: Formula, vars: Iterable[str] = ()) -> Specification:
    """``exists vars. F (pre@pre & F post@post)``."""
    for name, cond in (("pre", pre), ("post", post)):
        if is_temporal(cond):
            raise TemporalOperatorInCondition(f"{name}-condition must be propositional")
    body = Finally(And(pre.relabel("pre"), Finally(post.relabel("post"))))
    return Specification(tuple(vars), body)


def build_action_chain_spec(actions: Sequence[Atom]) -> Specification:
    """Right-nested until chain ``a1 U (a2 U (... an))``."""
    actions = list(actions)
    if not actions:
        raise EmptyActionList("action chain needs at least one action")
    labelled = [a.relabel(f"act_{i}") for i, a in enumerate(actions, start=1)]
    body = labelled[-1]
    for a in reversed(labelled[:-1]):
        body = Until(a, body)
    names = []
    for a in actions:
        for v in a.variables():
            if v not in names:
                names.append(v)
    return Specification(tuple(names), body)
