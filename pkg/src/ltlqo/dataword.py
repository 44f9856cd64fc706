"""Data words over Sigma x Delta^A, partial valuations over downward
closures, and the value-preserving order-isomorphism test that the check
operator relies on."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .order import QuasiOrder, downward_closure


class AttrNotInDomain(KeyError):
    pass


@dataclass(frozen=True)
class PartialValuation:
    """A valuation over cl(root) for some attribute root.

    Total valuations are represented the same way when root's closure is
    the full attribute set; positions in a word just keep a plain dict.
    """
    root: str
    assignment: tuple[tuple[str, int], ...]  # sorted by attr name

    @staticmethod
    def make(root: str, mapping: dict[str, int]) -> "PartialValuation":
        return PartialValuation(root, tuple(sorted(mapping.items())))

    def as_dict(self) -> dict[str, int]:
        return dict(self.assignment)

    def value(self, x: str) -> int:
        for a, v in self.assignment:
            if a == x:
                return v
        raise AttrNotInDomain(x)

    def domain(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.assignment)


@dataclass(frozen=True)
class DataWord:
    """Non-empty sequence of (letter, total valuation) positions, all over
    one attribute order."""
    order: QuasiOrder
    positions: tuple[tuple[str, tuple[tuple[str, int], ...]], ...]

    @staticmethod
    def make(order: QuasiOrder, positions) -> "DataWord":
        if not positions:
            raise ValueError("data words are non-empty")
        packed = []
        for letter, val in positions:
            if isinstance(val, dict):
                if set(val) != set(order.attrs):
                    raise ValueError(f"valuation domain {set(val)} != attrs")
                val = tuple(sorted(val.items()))
            packed.append((letter, val))
        return DataWord(order, tuple(packed))

    def __len__(self) -> int:
        return len(self.positions)

    def letter(self, i: int) -> str:
        return self.positions[i][0]

    def valuation(self, i: int) -> dict[str, int]:
        return dict(self.positions[i][1])


def restrict(valuation, x: str, order: QuasiOrder) -> PartialValuation:
    """d|_x: the restriction of a (total or partial) valuation to cl(x)."""
    if isinstance(valuation, PartialValuation):
        mapping = valuation.as_dict()
    else:
        mapping = dict(valuation)
    cl = downward_closure(order, x)
    if not cl <= set(mapping):
        raise AttrNotInDomain(x)
    return PartialValuation.make(x, {a: mapping[a] for a in cl})


def equiv(d: PartialValuation, e: PartialValuation, q: QuasiOrder) -> bool:
    """d ~ e: some bijection h between the domains preserves the ordering
    both ways and carries each value to an equal value.

    Backtracking over order-respecting bijections. Domains are downward
    closures, so on tree-shaped orders they are totally quasi-ordered and
    the search is effectively linear, but nothing here assumes tree-ness.
    """
    dd, de = sorted(d.domain()), sorted(e.domain())
    if len(dd) != len(de):
        return False
    dv, ev = d.as_dict(), e.as_dict()

    def extend(i, used, h):
        if i == len(dd):
            return True
        x = dd[i]
        for y in de:
            if y in used or dv[x] != ev[y]:
                continue
            ok = True
            for x2, y2 in h.items():
                if q.leq(x, x2) != q.leq(y, y2) or q.leq(x2, x) != q.leq(y2, y):
                    ok = False
                    break
            if ok:
                h[x] = y
                if extend(i + 1, used | {y}, h):
                    return True
                del h[x]
        return False

    return extend(0, frozenset(), {})


def canonicalize(w: DataWord) -> DataWord:
    """Rename data values into first-occurrence order (reading positions
    left to right, attributes in sorted order within a position)."""
    rename: dict[int, int] = {}
    new_positions = []
    for letter, val in w.positions:
        out = []
        for a, v in val:
            if v not in rename:
                rename[v] = len(rename)
            out.append((a, rename[v]))
        new_positions.append((letter, tuple(out)))
    return DataWord(w.order, tuple(new_positions))


_POS_RE = re.compile(r"([^\s{}]+)\{([^{}]*)\}")


def parse_word(text: str, order: QuasiOrder) -> DataWord:
    """Word format: whitespace-separated `letter{attr=int,...}` positions;
    every attribute of the order must be assigned at every position."""
    positions = []
    rest = text.strip()
    while rest:
        m = _POS_RE.match(rest)
        if not m:
            raise ValueError(f"cannot parse position at: {rest[:40]!r}")
        letter, body = m.group(1), m.group(2)
        val = {}
        if body.strip():
            for item in body.split(","):
                k, _, v = item.partition("=")
                val[k.strip()] = int(v)
        if set(val) != set(order.attrs):
            raise ValueError(
                f"position {letter!r} assigns {sorted(val)}, "
                f"expected {sorted(order.attrs)}")
        positions.append((letter, val))
        rest = rest[m.end():].lstrip()
    return DataWord.make(order, positions)


def format_word(w: DataWord) -> str:
    chunks = []
    for letter, val in w.positions:
        body = ",".join(f"{a}={v}" for a, v in val)
        chunks.append(f"{letter}{{{body}}}")
    return " ".join(chunks)
