"""Top-k proofs semiring and exact weighted model counting.

A literal is encoded as a non-negative int ``2 * fact_id + sign`` where
``sign`` is 0 for a positive and 1 for a negative occurrence, so sorting the
codes sorts by fact id and ``code ^ 1`` is the complementary literal.
"""
from __future__ import annotations

from typing import Callable, Dict, Hashable, Iterable, NamedTuple, Optional


from .errors import MissingProbability, UnknownWitnessLabel


def pos(fact_id: int) -> int:
    return 2 * fact_id


def neg(fact_id: int) -> int:
    return 2 * fact_id + 1


def lit_str(code: int) -> str:
    return f"{'-' if code & 1 else '+'}{code >> 1}"


class Proof(NamedTuple):
    lits: frozenset
    wit: tuple  # sorted ((label, value), ...)
    prob: float

    @property
    def key(self):
        return (self.lits, self.wit)

    def sorted_lits(self):
        return tuple(sorted(self.lits))

    def witness(self, label):
        for lab, value in self.wit:
            if lab == label:
                return value
        return None


class ProofSet:
    """Immutable set of proofs, stored in rank order (most probable first)."""

    __slots__ = ("proofs",)

    def __init__(self, proofs=()):
        self.proofs = tuple(proofs)

    def __iter__(self):
        return iter(self.proofs)

    def __len__(self):
        return len(self.proofs)

    def __bool__(self):
        return bool(self.proofs)

    def __eq__(self, other):
        if not isinstance(other, ProofSet):
            return NotImplemented
        return self.keys() == other.keys()

    def __hash__(self):
        return hash(self.keys())

    def __repr__(self):
        body = ", ".join(
            "{" + ",".join(lit_str(c) for c in p.sorted_lits()) + "}" for p in self.proofs
        )
        return f"ProofSet([{body}])"

    def keys(self):
        return frozenset(p.key for p in self.proofs)

    def clauses(self):
        """Distinct literal sets, i.e. the DNF with witnesses dropped."""
        return frozenset(p.lits for p in self.proofs)

    def fact_ids(self):
        return sorted({c >> 1 for p in self.proofs for c in p.lits})

    def witness_values(self, label):
        return sorted({v for p in self.proofs for lab, v in p.wit if lab == label})

    def dump(self) -> str:
        lines = []
        for p in self.proofs:
            lits = ",".join(lit_str(c) for c in p.sorted_lits())
            wit = ",".join(f"{lab}:{_fmt_wit(v)}" for lab, v in p.wit)
            lines.append(f"p={p.prob:.12g} lits=[{lits}] wit={{{wit}}}")
        return "\n".join(lines)


def _fmt_wit(v):
    if isinstance(v, tuple):
        return "(" + ",".join(str(x) for x in v) + ")"
    return str(v)


def _rank_key(p: Proof):
    return (-p.prob, p.sorted_lits(), p.wit)


def _merge_wit(a, b):
    if not b:
        return a
    if not a:
        return b
    merged = dict(a)
    for lab, v in b:
        old = merged.get(lab)
        # the same labelled node met at several positions keeps the earliest
        if old is None or v < old:
            merged[lab] = v
    return tuple(sorted(merged.items()))


class TopKProofs:
    """Semiring operations over :class:`ProofSet` for fixed probabilities.

    ``k=None`` disables truncation, which makes every operation exact.
    """

    def __init__(self, probs, k: Optional[int] = None):
        if k is not None and k < 1:
            raise ValueError("k must be a positive integer or None")
        self.probs = probs
        self.k = k
        self.zero = ProofSet()
        self.one = ProofSet((Proof(frozenset(), (), 1.0),))

    def weight(self, code: int) -> float:
        try:
            p = float(self.probs[code >> 1])
        except (KeyError, IndexError):
            raise MissingProbability(f"no probability for fact {code >> 1}") from None
        return 1.0 - p if code & 1 else p

    def literal(self, fact_id: int, positive: bool = True) -> ProofSet:
        code = pos(fact_id) if positive else neg(fact_id)
        return ProofSet((Proof(frozenset((code,)), (), self.weight(code)),))

    def conjunction(self, codes: Iterable[int]) -> ProofSet:
        """A single proof holding every literal in ``codes`` (false if contradictory)."""
        lits = frozenset(codes)
        if any(c ^ 1 in lits for c in lits):
            return self.zero
        prob = 1.0
        for c in lits:
            prob *= self.weight(c)
        return ProofSet((Proof(lits, (), prob),))

    def or_(self, a: ProofSet, b: ProofSet) -> ProofSet:
        if not a.proofs:
            return b
        if not b.proofs:
            return a
        return self._finish(a.proofs + b.proofs)

    def or_all(self, sets: Iterable[ProofSet]) -> ProofSet:
        proofs = []
        for s in sets:
            proofs.extend(s.proofs)
        return self._finish(proofs)

    def and_(self, a: ProofSet, b: ProofSet) -> ProofSet:
        if not a.proofs or not b.proofs:
            return self.zero
        if len(a.proofs) == 1 and not a.proofs[0].lits and not a.proofs[0].wit:
            return b
        if len(b.proofs) == 1 and not b.proofs[0].lits and not b.proofs[0].wit:
            return a
        out = []
        weight = self.weight
        for pa in a.proofs:
            la = pa.lits
            for pb in b.proofs:
                extra = pb.lits - la
                prob = pa.prob
                ok = True
                for c in extra:
                    if c ^ 1 in la:
                        ok = False
                        break
                    prob *= weight(c)
                if ok:
                    out.append(Proof(la | extra, _merge_wit(pa.wit, pb.wit), prob))
        return self._finish(out)

    def and_all(self, sets: Iterable[ProofSet]) -> ProofSet:
        acc = self.one
        for s in sets:
            acc = self.and_(acc, s)
            if not acc.proofs:
                break
        return acc

    def annotate(self, ps: ProofSet, label: str, value) -> ProofSet:
        """Record ``label -> value`` on every proof that lacks the label."""
        out = []
        for p in ps.proofs:
            if any(lab == label for lab, _ in p.wit):
                out.append(p)
            else:
                out.append(p._replace(wit=tuple(sorted(p.wit + ((label, value),)))))
        return self._finish(out)

    def _finish(self, proofs) -> ProofSet:
        unique = {}
        for p in proofs:
            unique.setdefault(p.key, p)
        proofs = list(unique.values())
        if len(proofs) > 1:
            proofs = _absorb(proofs)
        proofs.sort(key=_rank_key)
        if self.k is not None and len(proofs) > self.k:
            del proofs[self.k:]
        return ProofSet(proofs)


def _absorb(proofs):
    """Drop proofs that strictly contain another proof with the same witnesses."""
    groups = {}
    for p in proofs:
        groups.setdefault(p.wit, []).append(p)
    out = []
    for group in groups.values():
        if len(group) == 1:
            out.extend(group)
            continue
        group.sort(key=lambda p: len(p.lits))
        kept = []
        for p in group:
            if not any(q.lits < p.lits for q in kept):
                kept.append(p)
        out.extend(kept)
    return out


# ---------------------------------------------------------------------------
# Module-level semiring API

def ps_true() -> ProofSet:
    return TopKProofs({}).one


def ps_false() -> ProofSet:
    return ProofSet()


def ps_or(a: ProofSet, b: ProofSet, probs=None, k=None) -> ProofSet:
    return TopKProofs(_ProbView(a, b, probs), k).or_(a, b)


def ps_and(a: ProofSet, b: ProofSet, probs=None, k=None) -> ProofSet:
    return TopKProofs(_ProbView(a, b, probs), k).and_(a, b)


class _ProbView:
    """Probability lookup for the module-level helpers.

    Without explicit probabilities, weights are recovered from single-literal
    proofs where possible and default to 1 otherwise (ranking is then only
    meaningful with ``k=None``).
    """

    def __init__(self, a, b, probs):
        self.probs = probs
        self.seen = {}
        if probs is None:
            for ps in (a, b):
                for p in ps:
                    if len(p.lits) == 1:
                        (c,) = p.lits
                        self.seen[c >> 1] = p.prob if c % 2 == 0 else 1.0 - p.prob

    def __getitem__(self, fid):
        if self.probs is not None:
            return self.probs[fid]
        return self.seen.get(fid, 1.0)


# ---------------------------------------------------------------------------
# Weighted model counting by Shannon expansion

_FALSE, _TRUE = 0, 1
_EMPTY = frozenset()


class _Circuit:
    """Decision DAG built by Shannon expansion with component decomposition.

    Node kinds: ``("C", lits)`` conjunction of literals, ``("D", var, hi, lo)``
    decision on a fact, ``("O", children)`` disjunction of variable-disjoint
    parts. Children always precede their parents in ``nodes``.
    """

    def __init__(self):
        self.nodes = [("F",), ("T",)]
        self.memo = {}

    def build(self, clauses: frozenset) -> int:
        if not clauses:
            return _FALSE
        if _EMPTY in clauses:
            return _TRUE
        hit = self.memo.get(clauses)
        if hit is not None:
            return hit
        key = clauses
        if len(clauses) == 1:
            (only,) = clauses
            node = ("C", tuple(sorted(only)))
        else:
            clauses = _minimal(clauses)
            if len(clauses) == 1:
                idx = self.build(clauses)
                self.memo[key] = idx
                return idx
            parts = _components(clauses)
            if len(parts) > 1:
                node = ("O", tuple(self.build(p) for p in parts))
            else:
                var = _most_frequent(clauses)
                p, n = 2 * var, 2 * var + 1
                hi = frozenset(c - {p} for c in clauses if n not in c)
                lo = frozenset(c - {n} for c in clauses if p not in c)
                node = ("D", var, self.build(hi), self.build(lo))
        self.nodes.append(node)
        idx = len(self.nodes) - 1
        self.memo[key] = self.memo[clauses] = idx
        return idx

    def forward(self, weight: Callable[[int], float], prob: Callable[[int], float]):
        vals = [0.0] * len(self.nodes)
        vals[_TRUE] = 1.0
        for i in range(2, len(self.nodes)):
            node = self.nodes[i]
            kind = node[0]
            if kind == "C":
                v = 1.0
                for c in node[1]:
                    v *= weight(c)
            elif kind == "D":
                q = prob(node[1])
                v = q * vals[node[2]] + (1.0 - q) * vals[node[3]]
            else:
                miss = 1.0
                for ch in node[1]:
                    miss *= 1.0 - vals[ch]
                v = 1.0 - miss
            vals[i] = v
        return vals

    def backward(self, root, vals, weight, prob):
        adj = [0.0] * len(self.nodes)
        adj[root] = 1.0
        grad = {}
        for i in range(root, 1, -1):
            a = adj[i]
            node = self.nodes[i]
            kind = node[0]
            if kind == "C":
                lits = node[1]
                if a == 0.0:
                    for c in lits:
                        grad.setdefault(c >> 1, 0.0)
                    continue
                ws = [weight(c) for c in lits]
                for j, c in enumerate(lits):
                    rest = a * _prod_except(ws, j)
                    grad[c >> 1] = grad.get(c >> 1, 0.0) + (-rest if c & 1 else rest)
            elif kind == "D":
                var, hi, lo = node[1], node[2], node[3]
                q = prob(var)
                grad[var] = grad.get(var, 0.0) + a * (vals[hi] - vals[lo])
                adj[hi] += a * q
                adj[lo] += a * (1.0 - q)
            elif kind == "O":
                miss = [1.0 - vals[ch] for ch in node[1]]
                for j, ch in enumerate(node[1]):
                    adj[ch] += a * _prod_except(miss, j)
        return grad


def _prod_except(xs, j):
    out = 1.0
    for i, x in enumerate(xs):
        if i != j:
            out *= x
    return out


def _minimal(clauses):
    ordered = sorted(clauses, key=len)
    kept = []
    for c in ordered:
        if not any(k <= c for k in kept):
            kept.append(c)
    return frozenset(kept)


def _components(clauses):
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in clauses:
        vs = [l >> 1 for l in c]
        for v in vs:
            parent.setdefault(v, v)
        r0 = find(vs[0])
        for v in vs[1:]:
            r = find(v)
            if r != r0:
                parent[r] = r0
    groups = {}
    for c in clauses:
        groups.setdefault(find(next(iter(c)) >> 1), []).append(c)
    if len(groups) == 1:
        return [clauses]
    return [frozenset(g) for _, g in sorted(groups.items())]


def _most_frequent(clauses):
    counts = {}
    for c in clauses:
        for l in c:
            v = l >> 1
            counts[v] = counts.get(v, 0) + 1
    return min(counts, key=lambda v: (-counts[v], v))


def _lookup(probs):
    def prob(fid):
        try:
            return float(probs[fid])
        except (KeyError, IndexError):
            raise MissingProbability(f"no probability for fact {fid}") from None

    def weight(code):
        p = prob(code >> 1)
        return 1.0 - p if code & 1 else p

    return prob, weight


def _check_probs(clauses, prob):
    for c in clauses:
        for l in c:
            prob(l >> 1)


def wmc_clauses(clauses, probs, grad=False):
    """Exact probability that a random world satisfies a DNF of literal sets."""
    clauses = frozenset(frozenset(c) for c in clauses)
    prob, weight = _lookup(probs)
    _check_probs(clauses, prob)
    circuit = _Circuit()
    root = circuit.build(clauses)
    vals = circuit.forward(weight, prob)
    value = min(1.0, max(0.0, vals[root]))
    if not grad:
        return value
    g = circuit.backward(root, vals, weight, prob)
    for c in clauses:
        for l in c:
            g.setdefault(l >> 1, 0.0)
    return value, g


def wmc(ps: ProofSet, probs) -> float:
    return wmc_clauses(ps.clauses(), probs)


def wmc_grad(ps: ProofSet, probs):
    """``(wmc, {fact_id: d wmc / d p})`` for every fact occurring in ``ps``."""
    return wmc_clauses(ps.clauses(), probs, grad=True)


def wmc_partitions(ps: ProofSet, probs, key: Callable[[Proof], Hashable], grad=False):
    """WMC of each group of proofs sharing ``key(proof)``; ``None`` keys are skipped."""
    groups: Dict[Hashable, set] = {}
    for p in ps:
        k = key(p)
        if k is not None:
            groups.setdefault(k, set()).add(p.lits)
    return {k: wmc_clauses(groups[k], probs, grad=grad) for k in sorted(groups)}


def wmc_by_witness(ps: ProofSet, probs, label: str, known_labels=()):
    """WMC of the proofs grouped by the value they record for ``label``.

    Raises :class:`UnknownWitnessLabel` when no proof records ``label`` and
    it is not among ``known_labels`` (labels present in the specification).
    """
    values = wmc_partitions(ps, probs, lambda p: p.witness(label))
    if not values and label not in known_labels:
        raise UnknownWitnessLabel(f"witness label {label!r} not found")
    return values
