"""Nested counter systems: configuration terms (state-labelled nested
multisets), path-rewrite semantics, the nested multiset embedding order,
and a bounded coverability search with embedding-based subsumption
pruning."""

from __future__ import annotations

import re
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional


class RuleNotInSystem(ValueError):
    pass


class NcsConfig:
    """Immutable nested term q(children). Children are kept sorted by a
    total structural order so equal multisets compare equal and hash."""

    __slots__ = ("state", "children", "_key", "_hash", "size", "counts")

    def __init__(self, state, children, _key, _hash, size, counts):
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "_key", _key)
        object.__setattr__(self, "_hash", _hash)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "counts", counts)

    def __setattr__(self, *a):
        raise AttributeError("NcsConfig is immutable")

    def __eq__(self, other):
        return isinstance(other, NcsConfig) and self._key == other._key

    def __lt__(self, other):
        return self._key < other._key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return format_config(self)

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)


def mk_config(state: str, children: Iterable[NcsConfig] = ()) -> NcsConfig:
    kids = tuple(sorted(children, key=lambda c: c._key))
    key = (state, tuple(c._key for c in kids))
    counts = {state: 1}
    size = 1
    for c in kids:
        size += c.size
        for s, n in c.counts.items():
            counts[s] = counts.get(s, 0) + n
    return NcsConfig(state, kids, key, hash(key), size, counts)


def bare(state: str) -> NcsConfig:
    return mk_config(state)


@dataclass(frozen=True)
class NcsRule:
    lhs: tuple[str, ...]
    rhs: tuple[str, ...]

    def __post_init__(self):
        if not self.lhs or not self.rhs:
            raise ValueError("rule tuples are non-empty")

    def __repr__(self):
        return (f"({','.join(self.lhs)}) -> ({','.join(self.rhs)})")


@dataclass(frozen=True)
class Ncs:
    k: int
    states: frozenset[str]
    rules: tuple[NcsRule, ...]

    def __post_init__(self):
        for r in self.rules:
            if len(r.lhs) > self.k + 1 or len(r.rhs) > self.k + 1:
                raise ValueError(f"rule {r} exceeds nesting depth {self.k}")
            for s in r.lhs + r.rhs:
                if s not in self.states:
                    raise ValueError(f"undeclared state {s} in {r}")


# ---------------------------------------------------------------------------
# Embedding order


def _counter_dominates(small: dict, big: dict) -> bool:
    return all(big.get(s, 0) >= c for s, c in small.items())


@lru_cache(maxsize=None)
def leq(a: NcsConfig, b: NcsConfig) -> bool:
    """a embeds into b: same state and an injection of a's children into
    b's children with recursive embedding."""
    if a.state != b.state or a.size > b.size:
        return False
    if not a.children:
        return True
    if not _counter_dominates(a.counts, b.counts):
        return False
    return _inject(a.children, b.children)


def _inject(small: tuple, big: tuple) -> bool:
    # integer bipartite matching over distinct children with multiplicity
    sa = list(Counter(small).items())
    sb = list(Counter(big).items())
    need = [m for _, m in sa]
    cap = [m for _, m in sb]
    edges = [[leq(x, y) for y, _ in sb] for x, _ in sa]
    # match one unit at a time with augmenting paths
    assign = [[0] * len(sb) for _ in sa]
    used = [0] * len(sb)

    def augment(i, seen):
        for j in range(len(sb)):
            if edges[i][j] and j not in seen:
                seen.add(j)
                if used[j] < cap[j]:
                    assign[i][j] += 1
                    used[j] += 1
                    return True
                for i2 in range(len(sa)):
                    if assign[i2][j] > 0 and augment(i2, seen):
                        assign[i2][j] -= 1
                        assign[i][j] += 1
                        return True
        return False

    for i in range(len(sa)):
        for _ in range(need[i]):
            if not augment(i, set()):
                return False
    return True


# ---------------------------------------------------------------------------
# Rewriting


def _match_paths(c: NcsConfig, lhs: tuple[str, ...]):
    """All child-index paths spelling lhs from the root."""
    if c.state != lhs[0]:
        return
    if len(lhs) == 1:
        yield ()
        return
    for idx, ch in enumerate(c.children):
        for rest in _match_paths(ch, lhs[1:]):
            yield (idx,) + rest


def _rewrite(c: NcsConfig, path: tuple[int, ...], rhs: tuple[str, ...]
             ) -> NcsConfig:
    nodes = [c]
    for idx in path:
        nodes.append(nodes[-1].children[idx])
    i = len(path)
    j = len(rhs) - 1

    if j < i:
        # drop the matched node one below the last relabelled one,
        # subtree and all
        keep = list(nodes[j].children)
        del keep[path[j]]
        new = mk_config(rhs[j], keep)
        top = j
    else:
        extra = ()
        if j > i:
            chain = mk_config(rhs[j])
            for s in reversed(rhs[i + 1:j]):
                chain = mk_config(s, (chain,))
            extra = (chain,)
        new = mk_config(rhs[i], nodes[i].children + extra)
        top = i

    for d in range(top - 1, -1, -1):
        kids = list(nodes[d].children)
        kids[path[d]] = new
        new = mk_config(rhs[d], kids)
    return new


def step(n: Ncs, c: NcsConfig, r: NcsRule) -> set[NcsConfig]:
    """All successors of c under rule r, one per distinct match."""
    if r not in n.rules:
        raise RuleNotInSystem(repr(r))
    return {_rewrite(c, p, r.rhs) for p in _match_paths(c, r.lhs)}


def successors(n: Ncs, c: NcsConfig) -> set[tuple[NcsRule, NcsConfig]]:
    out = set()
    for r in n.rules:
        for s in step(n, c, r):
            out.add((r, s))
    return out


def labeled_successors(n: Ncs, c: NcsConfig):
    """Deterministic list of ((rule_index, match_path), successor)."""
    out = []
    for ri, r in enumerate(n.rules):
        for p in _match_paths(c, r.lhs):
            out.append(((ri, p), _rewrite(c, p, r.rhs)))
    out.sort(key=lambda t: (t[0][0], t[0][1], t[1]._key))
    return out


def descents(c: NcsConfig) -> set[NcsConfig]:
    """All results of deleting exactly one node (with its subtree)."""
    out = set()
    for idx, ch in enumerate(c.children):
        rest = c.children[:idx] + c.children[idx + 1:]
        out.add(mk_config(c.state, rest))
        for d in descents(ch):
            out.add(mk_config(c.state, rest + (d,)))
    return out


# ---------------------------------------------------------------------------
# Coverability


@dataclass(frozen=True)
class CoverLimits:
    max_configs: int = 100_000
    max_depth: int = 10_000


@dataclass
class Covered:
    run: list  # [(label, config)] from the step after start to the final
    explored: int


@dataclass
class NotCoveredWithinBounds:
    explored: int


@dataclass
class Exhausted:
    explored: int


def ncs_successor_gen(n: Ncs) -> Callable:
    return lambda c: labeled_successors(n, c)


def cover(gen: Callable, start: NcsConfig, target: NcsConfig,
          limits: CoverLimits = CoverLimits()):
    """Breadth-first coverability: does some reachable config embed the
    target from above?

    Newborn configs embedded in an already recorded one are pruned at
    birth; recorded configs are kept embedding-maximal per root state.
    The rewrite relation is compatible with the embedding (larger configs
    have larger successors), and every config that survives birth is
    eventually expanded, so pruning never starves a lineage: an emptied
    frontier is a definitive no.
    """
    if leq(target, start):
        return Covered([], 1)

    kept: dict[str, list[NcsConfig]] = {start.state: [start]}
    parents = {start: None}
    frontier = [start]
    explored = 1
    depth = 0

    def subsumed(c):
        return any(v.size >= c.size and leq(c, v)
                   for v in kept.get(c.state, ()))

    while frontier:
        depth += 1
        if depth > limits.max_depth:
            return NotCoveredWithinBounds(explored)
        next_frontier = []
        for c in sorted(frontier):
            for label, s in gen(c):
                if s in parents or subsumed(s):
                    continue
                explored += 1
                parents[s] = (c, label)
                bucket = kept.setdefault(s.state, [])
                bucket[:] = [v for v in bucket
                             if v.size > s.size or not leq(v, s)]
                bucket.append(s)
                if leq(target, s):
                    run = []
                    cur = s
                    while parents[cur] is not None:
                        p, lab = parents[cur]
                        run.append((lab, cur))
                        cur = p
                    run.reverse()
                    return Covered(run, explored)
                if explored > limits.max_configs:
                    return NotCoveredWithinBounds(explored)
                next_frontier.append(s)
        frontier = next_frontier
    return Exhausted(explored)


# ---------------------------------------------------------------------------
# Text formats


_TOK = re.compile(r"\s*([()+*]|[A-Za-z0-9_':^>✓✗ω$-]+)")


def parse_config(text: str) -> NcsConfig:
    """Term syntax: `q0(q1 + 2*q1(q2+q2))`; `n*t` repeats t n times."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOK.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ValueError(f"bad config syntax at {text[pos:]!r}")
            break
        tokens.append(m.group(1))
        pos = m.end()
    out, rest = _parse_term(tokens, 0)
    if rest != len(tokens):
        raise ValueError(f"trailing input: {tokens[rest:]}")
    return out


def _parse_term(toks, i):
    if i >= len(toks):
        raise ValueError("unexpected end of term")
    state = toks[i]
    if state in "()+*":
        raise ValueError(f"expected state name, got {state!r}")
    i += 1
    kids = []
    if i < len(toks) and toks[i] == "(":
        i += 1
        while i < len(toks) and toks[i] != ")":
            mult = 1
            if (i + 1 < len(toks) and toks[i + 1] == "*"
                    and toks[i].isdigit()):
                mult = int(toks[i])
                i += 2
            child, i = _parse_term(toks, i)
            kids.extend([child] * mult)
            if i < len(toks) and toks[i] == "+":
                i += 1
        if i >= len(toks):
            raise ValueError("unbalanced parentheses")
        i += 1
    return mk_config(state, kids), i


def format_config(c: NcsConfig) -> str:
    if not c.children:
        return c.state
    parts = []
    groups = []
    for ch in c.children:
        if groups and groups[-1][0] == ch:
            groups[-1][1] += 1
        else:
            groups.append([ch, 1])
    for ch, n in groups:
        s = format_config(ch)
        parts.append(s if n == 1 else f"{n}*{s}")
    return f"{c.state}({' + '.join(parts)})"


def parse_ncs(text: str) -> Ncs:
    """System format: `k <int>`, `states q0 q1 ...`,
    `rule (q0,q1) -> (q0,q1,q2)`, '#' comments."""
    k = None
    states: set[str] = set()
    rules = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("k "):
            k = int(line.split()[1])
        elif line.startswith("states"):
            states.update(line.split()[1:])
        elif line.startswith("rule"):
            m = re.match(r"rule\s*\(([^)]*)\)\s*->\s*\(([^)]*)\)", line)
            if not m:
                raise ValueError(f"line {ln}: cannot parse rule {raw!r}")
            lhs = tuple(s.strip() for s in m.group(1).split(","))
            rhs = tuple(s.strip() for s in m.group(2).split(","))
            rules.append(NcsRule(lhs, rhs))
        else:
            raise ValueError(f"line {ln}: cannot parse {raw!r}")
    if k is None:
        raise ValueError("missing `k` declaration")
    return Ncs(k, frozenset(states), tuple(rules))


def format_ncs(n: Ncs) -> str:
    lines = [f"k {n.k}", "states " + " ".join(sorted(n.states))]
    for r in n.rules:
        lines.append(f"rule ({','.join(r.lhs)}) -> ({','.join(r.rhs)})")
    return "\n".join(lines) + "\n"
