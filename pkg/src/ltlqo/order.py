"""Quasi-ordered attribute sets (A, <=): closure, downward closures,
tree-ness analysis, depth, and SCC collapse."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional


class UnknownAttribute(KeyError):
    pass


@dataclass(frozen=True)
class QuasiOrder:
    """A reflexive-transitive relation over a finite set of named attributes.

    Stored as the full closed pair set; attribute sets at the scales this
    package targets are tiny, so no sparse representation is attempted.
    """

    attrs: frozenset[str]
    pairs: frozenset[tuple[str, str]]  # (x, y) meaning x <= y, closed

    def leq(self, x: str, y: str) -> bool:
        if x not in self.attrs or y not in self.attrs:
            raise UnknownAttribute(x if x not in self.attrs else y)
        return (x, y) in self.pairs

    def equiv(self, x: str, y: str) -> bool:
        return self.leq(x, y) and self.leq(y, x)

    def strictly_less(self, x: str, y: str) -> bool:
        return self.leq(x, y) and not self.leq(y, x)

    def comparable(self, x: str, y: str) -> bool:
        return self.leq(x, y) or self.leq(y, x)

    def __contains__(self, x: str) -> bool:
        return x in self.attrs


@dataclass
class TreeReport:
    is_tree: bool
    depth: int
    sccs: list[frozenset[str]]
    witness: Optional[tuple[str, str, str]] = None


def close(attrs, pairs) -> QuasiOrder:
    """Reflexive-transitive closure of the given generating pairs.

    `attrs` is any iterable of attribute names, `pairs` an iterable of
    (x, y) tuples meaning x <= y.
    """
    aset = frozenset(attrs)
    rel = {(a, a) for a in aset}
    for x, y in pairs:
        if x not in aset:
            raise UnknownAttribute(x)
        if y not in aset:
            raise UnknownAttribute(y)
        rel.add((x, y))
    # Warshall fixpoint; fine for the handful of attributes we ever see.
    changed = True
    while changed:
        changed = False
        for x, y in list(rel):
            for y2, z in list(rel):
                if y2 == y and (x, z) not in rel:
                    rel.add((x, z))
                    changed = True
    return QuasiOrder(aset, frozenset(rel))


def downward_closure(q: QuasiOrder, x: str) -> frozenset[str]:
    """cl(x) = {y | y <= x}."""
    if x not in q.attrs:
        raise UnknownAttribute(x)
    return frozenset(y for y in q.attrs if q.leq(y, x))


def _sccs(q: QuasiOrder) -> list[frozenset[str]]:
    # On a transitively closed relation the SCCs are just the equivalence
    # classes of mutual comparability.
    seen = set()
    out = []
    for a in sorted(q.attrs):
        if a in seen:
            continue
        cls = frozenset(b for b in q.attrs if q.equiv(a, b))
        seen |= cls
        out.append(cls)
    return out


def analyze(q: QuasiOrder) -> TreeReport:
    """Tree-ness (every downward closure totally quasi-ordered), depth
    (longest strict chain, counting an SCC once), and the SCC list.

    When the order is not tree-shaped the report carries a witness
    (x, y, z) with x <= z, y <= z and x, y incomparable.
    """
    witness = None
    for z in sorted(q.attrs):
        cl = sorted(downward_closure(q, z))
        for i, x in enumerate(cl):
            for y in cl[i + 1:]:
                if not q.comparable(x, y):
                    witness = (x, y, z)
                    break
            if witness:
                break
        if witness:
            break

    sccs = _sccs(q)
    reps = {next(iter(sorted(s))): s for s in sccs}

    @lru_cache(maxsize=None)
    def chain_from(r: str) -> int:
        best = 1
        for r2 in reps:
            if q.strictly_less(r, r2):
                best = max(best, 1 + chain_from(r2))
        return best

    depth = max((chain_from(r) for r in reps), default=0)
    return TreeReport(is_tree=witness is None, depth=depth, sccs=sccs,
                      witness=witness)


def collapse_sccs(q: QuasiOrder):
    """Quotient by SCCs. Returns (partial_order, rep_of, scc_size) where
    rep_of maps every attribute to its class representative (the
    lexicographically least member) and scc_size maps each representative
    to its class size."""
    rep_of = {}
    sizes = {}
    for s in _sccs(q):
        r = min(s)
        sizes[r] = len(s)
        for a in s:
            rep_of[a] = r
    reps = frozenset(sizes)
    pairs = frozenset((rep_of[x], rep_of[y]) for (x, y) in q.pairs)
    return QuasiOrder(reps, pairs), rep_of, sizes


def parse_order(text: str) -> QuasiOrder:
    """Load an order from the line format:

        attr <name>
        le <x> <y>      # x <= y

    '#' starts a comment. Closure is applied."""
    attrs = []
    pairs = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "attr" and len(parts) == 2:
            attrs.append(parts[1])
        elif parts[0] == "le" and len(parts) == 3:
            pairs.append((parts[1], parts[2]))
        else:
            raise ValueError(f"line {ln}: cannot parse {raw!r}")
    return close(attrs, pairs)


def format_order(q: QuasiOrder) -> str:
    lines = [f"attr {a}" for a in sorted(q.attrs)]
    for x, y in sorted(q.pairs):
        if x != y:
            lines.append(f"le {x} {y}")
    return "\n".join(lines) + "\n"
