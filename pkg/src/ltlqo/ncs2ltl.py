"""Nested counter system coverability as freeze LTL satisfiability.

Configurations of a k-level system are rendered as interlaced word frames:
one position pair per branch, the odd position carrying the branch states
and one data value per level, the even position repeating the states with
its own values. Frames are laid out in reverse run order and chained by
links that force every even valuation to reappear on an odd position of
the following frame. ``build_formula`` produces a formula over the chain
l1 < ... < lk whose models are exactly such encodings of lossy covering
runs, ``encode_run`` renders a concrete run as a witness word, and
``decode_word`` parses any model back into a verified run. Everything is
sized for desk-scale systems: a handful of states per level and runs of a
few steps.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .dataword import DataWord
from .formulas import (And, Check, Finally, Freeze, Globally, Letter, Next,
                       Not, Or, TRUE, Until, WeakNext, conj, disj)
from .linearize import level_attr, line_order
from .ncs import NcsConfig, leq, mk_config, _match_paths, _rewrite, descents


class StatesNotStratified(ValueError):
    """States cannot be assigned one level each, or a configuration breaks
    the per-level naming discipline the encoding relies on."""


class InvalidRun(ValueError):
    """A run fails step verification, or a word does not decode to one."""


_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")
_RESERVED_RE = re.compile(r"^(?:odd|even|sep|(?:pad|mark|fresh|t)[0-9]+)$")
_RULE_PROP_RE = re.compile(r"^t([0-9]+)$")


def _pad(i: int) -> str:
    return f"pad{i}"


def _mark(i: int) -> str:
    return f"mark{i}"


def _fresh(i: int) -> str:
    return f"fresh{i}"


def _rule_prop(idx: int) -> str:
    return f"t{idx}"


def render_letter(props) -> str:
    """One alphabet symbol for a set of propositions."""
    return "_".join(sorted(props))


def letter_props(letter: str) -> frozenset[str]:
    return frozenset(letter.split("_")) if letter else frozenset()


def stratify(n, *configs) -> tuple[tuple[str, ...], ...]:
    """Assign every state occurring in the rules or the given
    configurations its unique level; returns the per-level state tuples
    (index 0 = roots). Raises StatesNotStratified when a state occurs at
    two levels, shadows a reserved proposition, or is not a plain
    alphanumeric name (letters must split unambiguously on underscores)."""
    found: dict[str, int] = {}

    def put(state, lvl):
        if not isinstance(state, str) or not _NAME_RE.match(state):
            raise StatesNotStratified(f"state name unusable as proposition: {state!r}")
        if _RESERVED_RE.match(state):
            raise StatesNotStratified(f"state shadows a reserved proposition: {state}")
        if state not in n.states:
            raise StatesNotStratified(f"state not declared by the system: {state}")
        if lvl > n.k:
            raise StatesNotStratified(f"state {state} used below level {n.k}")
        old = found.setdefault(state, lvl)
        if old != lvl:
            raise StatesNotStratified(f"state {state} used at levels {old} and {lvl}")

    for r in n.rules:
        for side in (r.lhs, r.rhs):
            for lvl, s in enumerate(side):
                put(s, lvl)

    def walk(c, lvl):
        put(c.state, lvl)
        for ch in c.children:
            walk(ch, lvl + 1)

    for c in configs:
        walk(c, 0)
    out: list[list[str]] = [[] for _ in range(n.k + 1)]
    for s, lvl in found.items():
        out[lvl].append(s)
    return tuple(tuple(sorted(x)) for x in out)


def _levelwise_distinct(cfg) -> None:
    seen: set[tuple[int, str]] = set()

    def walk(c, lvl):
        key = (lvl, c.state)
        if key in seen:
            raise StatesNotStratified(
                f"configuration repeats state {c.state} at level {lvl}; "
                "the exact-frame constraint needs one node per level and state")
        seen.add(key)
        for ch in c.children:
            walk(ch, lvl + 1)

    walk(cfg, 0)


def _branches(cfg):
    """(states, index path) per leaf, in canonical child order."""
    out = []

    def walk(node, states, path):
        states = states + (node.state,)
        if not node.children:
            out.append((states, path))
        for idx, ch in enumerate(node.children):
            walk(ch, states, path + (idx,))

    walk(cfg, (), ())
    return out


# ---------------------------------------------------------------------------
# Runs


@dataclass(frozen=True)
class LossyRun:
    """A lossy run C_0 .. C_n: before step s the configuration may shrink
    to intermediates[s] (embedding-below configs[s]), which rules[s]
    rewrites exactly to configs[s+1]."""

    configs: tuple
    rules: tuple
    intermediates: tuple
    paths: tuple | None = None

    @staticmethod
    def make(configs, rules, intermediates=None, paths=None) -> "LossyRun":
        configs = tuple(configs)
        rules = tuple(rules)
        if intermediates is None:
            intermediates = configs[:-1]
        return LossyRun(configs, rules, tuple(intermediates),
                        None if paths is None else tuple(tuple(p) for p in paths))

    @staticmethod
    def from_cover(n, start, steps) -> "LossyRun":
        """Build a (loss-free) run from the labelled steps of a covering
        search, i.e. pairs ((rule index, match path), successor)."""
        configs = [start]
        rules = []
        paths = []
        for label, cfg in steps:
            (ridx, path) = label
            if not 0 <= ridx < len(n.rules):
                raise InvalidRun(f"rule index {ridx} out of range")
            rules.append(n.rules[ridx])
            paths.append(tuple(path))
            configs.append(cfg)
        return LossyRun.make(configs, rules, paths=paths)

    def validate(self, n) -> tuple[tuple[int, ...], ...]:
        """Check every step and return one witness match path per step."""
        if len(self.configs) != len(self.rules) + 1:
            raise InvalidRun("rule count does not fit the configuration count")
        if len(self.intermediates) != len(self.rules):
            raise InvalidRun("one intermediate configuration per step required")
        if self.paths is not None and len(self.paths) != len(self.rules):
            raise InvalidRun("one match path per step required")
        resolved = []
        for s, rule in enumerate(self.rules):
            if rule not in n.rules:
                raise InvalidRun(f"rule not in system: {rule!r}")
            inter, dst = self.intermediates[s], self.configs[s + 1]
            if not leq(inter, self.configs[s]):
                raise InvalidRun(f"step {s}: intermediate does not embed into its configuration")
            candidates = ([self.paths[s]] if self.paths is not None
                          else list(_match_paths(inter, rule.lhs)))
            hit = None
            for path in candidates:
                try:
                    if _rewrite(inter, tuple(path), rule.rhs) == dst:
                        hit = tuple(path)
                        break
                except (IndexError, KeyError):
                    continue
            if hit is None:
                raise InvalidRun(f"step {s}: {rule!r} does not rewrite the intermediate to the successor")
            resolved.append(hit)
        return tuple(resolved)


@dataclass(frozen=True)
class RunEncoding:
    """A run rendered as a data word: `configs` lists the configuration
    encoded by each frame in word order (reverse run order) and `offsets`
    the word position of each frame's first pair."""

    word: DataWord
    configs: tuple
    offsets: tuple


# ---------------------------------------------------------------------------
# Alphabet


def generic_alphabet(n, *configs) -> tuple[str, ...]:
    """Every letter that can occur in an encoding of the system: branch
    state tuples padded below their depth, both parities, separator and
    rule annotations on odd positions, mark prefixes on even positions,
    and upward-closed freshness sets. Polynomial for fixed k but large;
    prefer the letters of a concrete encoding when evaluating."""
    levels = stratify(n, *configs)
    k = max(1, n.k)

    tuples: list[tuple[str, ...]] = []

    def ext(prefix, lvl):
        tuples.append(tuple(prefix) + tuple(_pad(j) for j in range(lvl, k + 1)))
        if lvl <= k:
            for q in (levels[lvl] if lvl < len(levels) else ()):
                ext(prefix + [q], lvl + 1)

    for root in levels[0]:
        ext([root], 1)

    fresh_sets = [frozenset()] + [frozenset(_fresh(j) for j in range(i, k + 1))
                                  for i in range(k, 0, -1)]
    mark_sets = [frozenset()] + [frozenset(_mark(j) for j in range(1, i + 1))
                                 for i in range(1, k + 1)]
    letters = set()
    for tup in tuples:
        base = frozenset(tup)
        for fr in fresh_sets:
            letters.add(base | fr | {"odd"})
            letters.add(base | fr | {"odd", "sep"})
            for idx in range(len(n.rules)):
                letters.add(base | fr | {"odd", "sep", _rule_prop(idx)})
            for mk in mark_sets:
                letters.add(base | fr | mk | {"even"})
    return tuple(sorted(render_letter(s) for s in letters))


def _letter_sets(alphabet):
    sets = []
    seen = set()
    for a in alphabet:
        s = letter_props(a) if isinstance(a, str) else frozenset(a)
        r = render_letter(s)
        if r not in seen:
            seen.add(r)
            sets.append(s)
    return sorted(sets, key=render_letter)


# ---------------------------------------------------------------------------
# Formula assembly


def _implies(a, b):
    return Or(Not(a), b)


def _iff(a, b):
    return Or(And(a, b), And(Not(a), Not(b)))


def count_nodes(phi) -> int:
    """Distinct formula objects reachable from phi (shared subtrees count
    once)."""
    seen = set()
    stack = [phi]
    while stack:
        f = stack.pop()
        if id(f) in seen:
            continue
        seen.add(id(f))
        for attr in ("left", "right", "child"):
            sub = getattr(f, attr, None)
            if sub is not None:
                stack.append(sub)
    return len(seen)


def size_bound(n, start, end, alphabet) -> int:
    """The concrete polynomial bound asserted by build_formula: with nq
    the number of stratified states, rlen the summed rule lengths, and
    letter sets S, the formula stays below

        2*sum(|s| for s in S) + 8*(nq + 3 + 3k + |rules|)
        + 6*(k+2)^2 * (nq + rlen + |start| + |end| + 2)
        + 6*(k+1) * (nq + k)^2

    where the first line covers compiling propositions to letter
    disjunctions, the second the shared temporal skeleton, and the third
    the per-level state exclusions."""
    sets = _letter_sets(alphabet)
    levels = stratify(n, start, end)
    k = max(1, n.k)
    nq = sum(len(x) for x in levels)
    props = nq + 3 + 3 * k + len(n.rules)
    rlen = sum(len(r.lhs) + len(r.rhs) for r in n.rules)
    prop_cost = 2 * sum(len(s) for s in sets) + 8 * props
    skeleton = 6 * (k + 2) ** 2 * (nq + rlen + start.size + end.size + 2)
    mutex = 6 * (k + 1) * (nq + k) ** 2
    return prop_cost + skeleton + mutex


class _Builder:
    def __init__(self, n, levels, sets):
        self.n = n
        self.levels = levels
        self.k = max(1, n.k)
        self.sets = sets
        self._letters: dict[str, Letter] = {}
        self._props: dict[str, object] = {}
        self._share2: dict[tuple[int, bool], object] = {}
        self._links: dict[tuple[int, str], object] = {}
        self.odd = self.prop("odd")
        self.even = self.prop("even")
        self.sep = self.prop("sep")
        self.in_frame = Next(Not(self.sep))

    # -- shared pieces ------------------------------------------------

    def letter(self, s):
        name = render_letter(s)
        f = self._letters.get(name)
        if f is None:
            f = Letter(name)
            self._letters[name] = f
        return f

    def prop(self, p):
        f = self._props.get(p)
        if f is None:
            f = disj([self.letter(s) for s in self.sets if p in s])
            self._props[p] = f
        return f

    def mark(self, i):
        return TRUE if i == 0 else self.prop(_mark(i))

    def check(self, i):
        return TRUE if i == 0 else Check(level_attr(i))

    def states_at(self, i):
        return tuple(self.levels[i]) if i < len(self.levels) else ()

    def level_props(self, i):
        qs = list(self.states_at(i))
        if i >= 1:
            qs.append(_pad(i))
        return qs

    def share2(self, i, same=True):
        """Stored here, the odd/even two positions later agrees (or not)
        on the level-i prefix. Shared object per (i, polarity)."""
        f = self._share2.get((i, same))
        if f is None:
            c = Check(level_attr(i))
            f = Freeze(level_attr(self.k), Next(Next(c if same else Not(c))))
            self._share2[(i, same)] = f
        return f

    def link(self, i, phi):
        """From an even position: some odd position of the next frame
        agrees on the level-i prefix and satisfies phi."""
        return Freeze(level_attr(self.k),
                      Until(Not(self.sep),
                            And(self.sep,
                                Until(self.in_frame,
                                      And(self.check(i), And(self.odd, phi))))))

    def link_prop(self, i, p):
        f = self._links.get((i, p))
        if f is None:
            f = self.link(i, self.prop(p))
            self._links[(i, p)] = f
        return f

    # -- frame structure ----------------------------------------------

    def phi_conf(self):
        k = self.k
        odd, even, sep = self.odd, self.even, self.sep
        bullets = []
        bullets.append(_implies(odd, Next(And(Not(odd), WeakNext(odd)))))
        bullets.append(_iff(even, Not(odd)))
        all_states = [q for i in range(k + 1) for q in self.level_props(i)]
        mimic = conj([_iff(self.prop(q), Next(self.prop(q))) for q in all_states])
        mimic = And(mimic, Freeze(level_attr(1), Next(Not(Check(level_attr(1))))))
        mimic = And(mimic, conj([_iff(self.share2(i), Next(self.share2(i)))
                                 for i in range(1, k + 1)]))
        bullets.append(_implies(odd, mimic))
        for i in range(1, k + 1):
            ci = Check(level_attr(i))
            bullets.append(Freeze(level_attr(k),
                                  _implies(And(Next(Next(Not(ci))), odd),
                                           Not(Next(Finally(And(odd, ci)))))))
        for i in range(1, k + 1):
            for q in self.level_props(i):
                bullets.append(_implies(And(self.prop(q), self.share2(i)),
                                        Next(Next(self.prop(q)))))
        for i in range(k + 1):
            qs = self.level_props(i)
            bullets.append(disj([self.prop(q) for q in qs]))
            for a in range(len(qs)):
                for b in range(len(qs)):
                    if a != b:
                        bullets.append(_implies(self.prop(qs[a]), Not(self.prop(qs[b]))))
        for i in range(1, k):
            bullets.append(_implies(self.prop(_pad(i)), self.prop(_pad(i + 1))))
            pad_next = self.prop(_pad(i + 1))
            bullets.append(_implies(self.share2(i),
                                    And(Not(pad_next), Next(Next(Not(pad_next))))))
        bullets.append(_implies(sep, odd))
        bullets.append(_implies(self.share2(1), Next(Next(Not(sep)))))
        for i in range(1, k + 1):
            bullets.append(Freeze(level_attr(i),
                                  Not(Next(Finally(And(Check(level_attr(i)),
                                                       self.prop(_fresh(i))))))))
        return And(sep, Globally(conj(bullets)))

    # -- rule scheduling ----------------------------------------------

    def phi_flow(self):
        k = self.k
        sep = self.sep
        t_props = [self.prop(_rule_prop(i)) for i in range(len(self.n.rules))]
        parts = [Globally(_iff(And(sep, Next(Finally(sep))), disj(t_props)))]
        for idx, r in enumerate(self.n.rules):
            j = len(r.rhs) - 1
            marked = conj([And(self.mark(l), self.prop(r.rhs[l]))
                           for l in range(1, j + 1)])
            a = Until(self.in_frame, And(self.even, marked))
            hold = And(self.prop(r.rhs[0]),
                       conj([Not(self.mark(l)) for l in range(j + 1, k + 1)]))
            b = And(hold, Next(Until(hold, sep)))
            parts.append(Globally(_implies(t_props[idx], And(a, b))))
        for i in range(1, k + 1):
            mi = self.mark(i)
            parts.append(Globally(_implies(self.share2(i),
                                           _iff(mi, Next(Next(mi))))))
            parts.append(Globally(_implies(And(mi, self.share2(i, same=False)),
                                           Next(Until(Not(mi), sep)))))
        return conj(parts)

    # -- per-rule content ---------------------------------------------

    def _copy_unmarked(self):
        body = []
        for l in range(1, self.k + 1):
            for q in self.states_at(l):
                body.append(_implies(And(Not(self.mark(l)), self.prop(q)),
                                     self.link_prop(self.k, q)))
        return conj(body)

    def copy_formula(self, args, but=None):
        guard = self.even if but is None else And(self.even, Not(self.mark(but)))
        body = [self.link_prop(self.k, args[0])]
        for l in range(1, len(args)):
            body.append(_implies(self.mark(l), self.link_prop(self.k, args[l])))
        body.append(self._copy_unmarked())
        return Next(Until(_implies(guard, conj(body)), self.sep))

    def new_formula(self, rule):
        i = len(rule.rhs) - 1
        states = conj([self.prop(q) for q in rule.lhs])
        witness = And(self.even,
                      And(self.mark(i),
                          self.link(i, And(self.prop(_fresh(i + 1)), states))))
        return Until(Not(Next(self.sep)), witness)

    def zero_formula(self, rule):
        j = len(rule.rhs) - 1
        pads = conj([self.prop(_pad(l)) for l in range(j + 1, self.k + 1)])
        return Until(self.in_frame, And(self.mark(j), pads))

    def phi_rules(self):
        parts = []
        for idx, r in enumerate(self.n.rules):
            t = self.prop(_rule_prop(idx))
            if len(r.lhs) == len(r.rhs):
                body = self.copy_formula(r.lhs)
            elif len(r.lhs) > len(r.rhs):
                body = And(self.copy_formula(r.lhs[:len(r.rhs)]), self.new_formula(r))
            else:
                j = len(r.rhs) - 1
                body = And(self.copy_formula(r.lhs, but=j), self.zero_formula(r))
            parts.append(Globally(_implies(t, body)))
        return conj(parts)

    # -- boundary frames ----------------------------------------------

    def _pattern(self, states):
        d = len(states) - 1
        parts = [self.prop(q) for q in states]
        parts += [self.prop(_pad(l)) for l in range(d + 1, self.k + 1)]
        return conj(parts)

    def phi_start(self, start):
        last = And(self.sep, Not(Next(Finally(self.sep))))
        branches = _branches(start)
        chains = sorted({states[:t] for states, _ in branches
                         for t in range(1, len(states) + 1)})
        shape = Globally(disj([self._pattern(c) for c in chains]))
        same_block = []
        per_level: dict[int, set[str]] = {}
        for states, _ in branches:
            for lvl, q in enumerate(states):
                if lvl >= 1:
                    per_level.setdefault(lvl, set()).add(q)
        for lvl in sorted(per_level):
            for q in sorted(per_level[lvl]):
                at = And(self.prop(q), self.odd)
                same_block.append(Globally(_implies(
                    at, Freeze(level_attr(lvl),
                               Globally(_implies(at, Check(level_attr(lvl))))))))
        present = conj([Finally(And(self.odd, self._pattern(states)))
                        for states, _ in branches])
        return Globally(_implies(last, conj([shape, conj(same_block), present])))

    def phi_end(self, end):
        branches = _branches(end)
        forks = [len(_common(branches[r][1], branches[r + 1][1]))
                 for r in range(len(branches) - 1)]

        def chain(r):
            states, _ = branches[r]
            base = And(self.odd, conj([self.prop(q) for q in states]))
            if r + 1 < len(branches):
                c = forks[r]
                step = Until(self.in_frame,
                             And(And(self.check(c), Not(self.check(c + 1))),
                                 chain(r + 1)))
                base = And(base, Freeze(level_attr(self.k), step))
            return base

        return Until(self.in_frame, chain(0))

    def build(self, start, end):
        return conj([self.phi_conf(), self.phi_flow(), self.phi_rules(),
                     self.phi_start(start), self.phi_end(end)])


def _common(p, q):
    out = []
    for a, b in zip(p, q):
        if a != b:
            break
        out.append(a)
    return tuple(out)


def frame_structure_formula(n, *configs, alphabet=None):
    """Only the single-frame structural constraints (interlacing, blocks,
    padding, separator and freshness discipline), for checking hand-built
    frames."""
    levels = stratify(n, *configs)
    if alphabet is None:
        alphabet = generic_alphabet(n, *configs)
    return _Builder(n, levels, _letter_sets(alphabet)).phi_conf()


def build_formula(n, start, end, alphabet=None):
    """The coverability formula for the system n: satisfiable over the
    chain l1 < ... < lk exactly by interlaced encodings of reversed lossy
    runs from `start` to some configuration covering `end`. Formula size
    (distinct nodes) stays below the polynomial given by size_bound,
    which is asserted. `alphabet` defaults to generic_alphabet(n, start,
    end); evaluation is far cheaper over the letters of a concrete
    encoding."""
    levels = stratify(n, start, end)
    _levelwise_distinct(start)
    if alphabet is None:
        alphabet = generic_alphabet(n, start, end)
    sets = _letter_sets(alphabet)
    phi = _Builder(n, levels, sets).build(start, end)
    bound = size_bound(n, start, end, sets)
    got = count_nodes(phi)
    assert got <= bound, f"formula has {got} nodes, bound {bound}"
    return phi


# ---------------------------------------------------------------------------
# Witness encoding


class _UNode:
    __slots__ = ("state", "kids", "uid")

    def __init__(self, state, kids, uid):
        self.state = state
        self.kids = kids
        self.uid = uid

    def erase(self) -> NcsConfig:
        return mk_config(self.state, [c.erase() for c in self.kids])

    def sort(self):
        for c in self.kids:
            c.sort()
        self.kids.sort(key=lambda c: c.erase()._key)

    def uids(self) -> set[int]:
        out = {self.uid}
        for c in self.kids:
            out |= c.uids()
        return out

    def by_uid(self, table):
        table[self.uid] = self
        for c in self.kids:
            c.by_uid(table)
        return table


def _uid_tree(cfg, counter) -> _UNode:
    return _UNode(cfg.state,
                  [_uid_tree(c, counter) for c in cfg.children],
                  next(counter))


def _embed(host: _UNode, cfg) -> _UNode | None:
    """A uid-preserving copy of a subtree of host that realizes cfg
    exactly, children in cfg order; None when cfg does not embed."""
    if host.state != cfg.state:
        return None

    def assign(ci, used):
        if ci == len(cfg.children):
            return []
        for hi, hk in enumerate(host.kids):
            if hi in used:
                continue
            sub = _embed(hk, cfg.children[ci])
            if sub is not None:
                rest = assign(ci + 1, used | {hi})
                if rest is not None:
                    return [sub] + rest
        return None

    kids = assign(0, frozenset())
    if kids is None:
        return None
    return _UNode(cfg.state, kids, host.uid)


@dataclass
class _StepMeta:
    rule_index: int
    kind: str                  # "rn" | "dec" | "inc"
    lhs_uids: tuple            # match path, root downward, before rewriting
    rhs_uids: tuple            # surviving (relabelled) plus created path
    deleted: int | None        # uid of the removed node (dec)
    created: frozenset         # uids of the appended chain (inc)


def _apply(tree: _UNode, rule, path, counter) -> _StepMeta:
    nodes = [tree]
    cur = tree
    for idx in path:
        cur = cur.kids[idx]
        nodes.append(cur)
    if len(nodes) != len(rule.lhs) or any(nd.state != q for nd, q in zip(nodes, rule.lhs)):
        raise InvalidRun(f"match path {path} does not spell {rule!r}")
    lhs_uids = tuple(nd.uid for nd in nodes)
    low, high = len(rule.rhs), len(rule.lhs)
    for l in range(min(low, high)):
        nodes[l].state = rule.rhs[l]
    if low < high:
        nodes[low - 1].kids.remove(nodes[low])
        return _StepMeta(-1, "dec", lhs_uids, lhs_uids[:low], nodes[low].uid, frozenset())
    if low > high:
        created = []
        chain = None
        for st in reversed(rule.rhs[high:]):
            chain = _UNode(st, [chain] if chain is not None else [], next(counter))
            created.append(chain.uid)
        nodes[high - 1].kids.append(chain)
        created = tuple(reversed(created))
        return _StepMeta(-1, "inc", lhs_uids, lhs_uids + created, None, frozenset(created))
    return _StepMeta(-1, "rn", lhs_uids, lhs_uids, None, frozenset())


class _Pair:
    __slots__ = ("path", "states", "depth", "ghost", "o", "e", "marks",
                 "o_fresh", "e_fresh")

    def __init__(self, path, states, depth, ghost=False):
        self.path = path          # uids, levels 0..depth
        self.states = states      # state names, levels 0..depth
        self.depth = depth
        self.ghost = ghost
        self.o = []               # values, levels 1..k (filled later)
        self.e = []
        self.marks = set()
        self.o_fresh = set()
        self.e_fresh = set()


def _pairs_of(tree: _UNode, prio=None, orders=None) -> list[_Pair]:
    """Leaf pairs in depth-first order. `prio` floats one root-down uid
    path to the front (the shrink witness); `orders` fixes explicit child
    sequences per node uid (realizing a chosen embedding in frame 0)."""
    out = []

    def walk(node, path, states, on_prio, depth):
        if not node.kids:
            out.append(_Pair(tuple(path), tuple(states), depth))
            return
        if orders is not None and node.uid in orders:
            rank = {u: t for t, u in enumerate(orders[node.uid])}
            kids = sorted(node.kids, key=lambda c: rank[c.uid])
        else:
            def key(c):
                first = 0 if (on_prio and depth + 1 < len(prio)
                              and c.uid == prio[depth + 1]) else 1
                return (first, c.erase()._key)
            kids = sorted(node.kids, key=key)
        for c in kids:
            nxt = (on_prio and depth + 1 < len(prio)
                   and c.uid == prio[depth + 1])
            walk(c, path + [c.uid], states + [c.state], nxt, depth + 1)

    prio = prio or ()
    walk(tree, [tree.uid], [tree.state], bool(prio) and prio[0] == tree.uid, 0)
    return out


def _end_order(tree: _UNode, end: NcsConfig) -> dict[int, list[int]]:
    """Per-node child sequences that realize some embedding of `end` into
    the tree with image branches laid out in the canonical branch order
    of `end` itself."""
    orders: dict[int, list[int]] = {}

    def match(c, h) -> bool:
        if h.state != c.state or not leq(c, h.erase()):
            return False

        def assign(ci, used):
            if ci == len(c.children):
                return []
            for hi, hk in enumerate(h.kids):
                if hi in used:
                    continue
                if match(c.children[ci], hk):
                    rest = assign(ci + 1, used | {hi})
                    if rest is not None:
                        return [hi] + rest
            return None

        picks = assign(0, frozenset())
        if picks is None:
            return False
        tail = [hk.uid for i, hk in enumerate(h.kids) if i not in set(picks)]
        orders[h.uid] = [h.kids[i].uid for i in picks] + tail
        return True

    if not match(end, tree):
        raise InvalidRun("final configuration does not cover the requested target")
    return orders


def encode_run(run: LossyRun, n, end=None) -> RunEncoding:
    """Render a verified lossy run as a data word satisfying
    build_formula(n, run.configs[0], end). With end omitted the first
    frame keeps canonical branch order, which matches the run's own final
    configuration as the target; passing a covered `end` lays the first
    frame out along an embedding of it instead. Fresh values come from
    one global counter; a full valuation reappears only through the
    even-to-odd links (or, for a shrunk branch borrowing its padding
    values from a surviving neighbour, once more on that neighbour's
    even position)."""
    paths = run.validate(n)
    stratify(n, *run.configs)
    k = max(1, n.k)
    nsteps = len(run.rules)
    uid_counter = itertools.count(1)

    trees = [_uid_tree(run.configs[0], uid_counter)]
    trees[0].sort()
    metas: list[_StepMeta] = []
    for s in range(nsteps):
        emb = _embed(trees[s], run.intermediates[s])
        if emb is None:
            raise InvalidRun(f"step {s}: intermediate does not embed into the configuration")
        meta = _apply(emb, run.rules[s], paths[s], uid_counter)
        meta.rule_index = n.rules.index(run.rules[s])
        emb.sort()
        if emb.erase() != run.configs[s + 1]:
            raise InvalidRun(f"step {s}: rewrite does not reproduce the successor")
        trees.append(emb)
        metas.append(meta)

    orders0 = None
    if end is not None:
        if not leq(end, run.configs[-1]):
            raise InvalidRun("final configuration does not cover the requested target")
        orders0 = _end_order(trees[-1], end)

    val_counter = itertools.count(1)

    def fresh():
        return next(val_counter)

    frames: list[list[_Pair]] = []
    prev_e: dict[int, int] = {}
    # Demands of the frame just built on the next one: o values that must
    # reappear, keyed by the uid path they must sit under.
    real_demands: dict[tuple, list] = {}
    ghost_demands: list[tuple] = []
    retargets: list[tuple] = []

    for m in range(nsteps + 1):
        tau = nsteps - m
        tree = trees[tau]
        uid_nodes = tree.by_uid({})

        prio = None
        if m >= 1 and metas[tau].kind == "dec":
            prio = metas[tau].lhs_uids
        pairs = _pairs_of(tree, prio, orders0 if m == 0 else None)

        taken: dict[tuple, int] = {}
        for key, values in list(real_demands.items()):
            hit = None
            for idx, p in enumerate(pairs):
                if tuple(p.path[1:]) == key:
                    hit = idx
                    break
            if hit is None:
                raise InvalidRun("internal: demanded branch missing from frame")
            taken[key] = hit
        root_state = tree.state
        ghosts = [_Pair((tree.uid,), (root_state,), 0, ghost=True)
                  for _ in ghost_demands]
        pairs = pairs + ghosts

        o_node = {u: prev_e.get(u) if prev_e.get(u) is not None else fresh()
                  for u in uid_nodes}
        gi = 0
        for p in pairs:
            if p.ghost:
                p.o = list(ghost_demands[gi])
                gi += 1
                continue
            vals = [o_node[u] for u in p.path[1:]]
            key = tuple(p.path[1:])
            if key in taken and pairs[taken[key]] is p:
                vals += list(real_demands[key])
            else:
                vals += [fresh() for _ in range(k - p.depth)]
            p.o = vals

        # Back-patch the previous frame's shrunk branches: their padding
        # copies the values of a surviving sibling branch in this frame.
        for (prev_pair, d, under, avoid) in retargets:
            beta = None
            for p in pairs:
                if p.ghost or p.depth <= d or p.path[d] != under:
                    continue
                if avoid is not None and avoid in p.path:
                    continue
                beta = p
                break
            if beta is None:
                raise InvalidRun(
                    "run not encodable: a shrinking step removes the last branch "
                    "below a retained node, leaving its padding nothing to link to")
            prev_pair.e[d:] = beta.o[d:]

        e_node = {u: fresh() for u in uid_nodes}
        for p in pairs:
            if p.ghost:
                p.e = [fresh() for _ in range(k)]
            else:
                p.e = [e_node[u] for u in p.path[1:]]
                p.e += [fresh() for _ in range(k - p.depth)]

        if m <= nsteps - 1:
            meta = metas[tau - 1]
            rhs = meta.rhs_uids
            for p in pairs:
                for l in range(1, min(p.depth, len(rhs) - 1) + 1):
                    if p.path[l] == rhs[l]:
                        p.marks.add(l)

        real_demands = {}
        ghost_demands = []
        retargets = []
        if m <= nsteps - 1:
            meta = metas[tau - 1]
            next_nodes = trees[tau - 1].by_uid({})
            bottom = meta.rhs_uids[-1] if meta.kind == "inc" else None
            for p in pairs:
                if bottom is not None and bottom in p.path:
                    continue
                s = 0
                for l in range(1, p.depth + 1):
                    if p.path[l] in meta.created:
                        break
                    s = l
                assert s == p.depth or all(u in meta.created for u in p.path[s + 1:]), \
                    "non-surviving uid outside the created chain"
                u_d = p.path[s]
                key = tuple(p.path[1:s + 1])
                target = next_nodes.get(u_d)
                if target is None:
                    raise InvalidRun("internal: surviving node missing from the next frame")
                if not target.kids and key not in real_demands:
                    real_demands[key] = list(p.e[s:])
                elif s == 0:
                    ghost_demands.append(tuple(p.e))
                else:
                    avoid = meta.deleted if meta.kind == "dec" else None
                    retargets.append((p, s, u_d, avoid))
        frames.append(pairs)
        prev_e = e_node

    # Truthful freshness marks: a position carries fresh_i exactly when
    # its level-i value prefix has not occurred before.
    seen: list[set] = [set() for _ in range(k + 1)]
    for pairs in frames:
        for p in pairs:
            for vals, box in ((p.o, p.o_fresh), (p.e, p.e_fresh)):
                for i in range(1, k + 1):
                    pre = tuple(vals[:i])
                    if pre not in seen[i]:
                        seen[i].add(pre)
                        box.add(i)

    order = line_order(k)
    positions = []
    offsets = []
    word_configs = []
    for m, pairs in enumerate(frames):
        offsets.append(len(positions))
        word_configs.append(run.configs[nsteps - m])
        for j, p in enumerate(pairs):
            stated = list(p.states) + [_pad(l) for l in range(p.depth + 1, k + 1)]
            oprops = set(stated) | {"odd"}
            oprops |= {_fresh(i) for i in p.o_fresh}
            if j == 0:
                oprops.add("sep")
                if m <= nsteps - 1:
                    oprops.add(_rule_prop(metas[nsteps - m - 1].rule_index))
            eprops = set(stated) | {"even"}
            eprops |= {_fresh(i) for i in p.e_fresh}
            eprops |= {_mark(l) for l in p.marks}
            oval = {level_attr(i): p.o[i - 1] for i in range(1, k + 1)}
            eval_ = {level_attr(i): p.e[i - 1] for i in range(1, k + 1)}
            positions.append((render_letter(oprops), oval))
            positions.append((render_letter(eprops), eval_))
    word = DataWord.make(order, positions)
    return RunEncoding(word, tuple(word_configs), tuple(offsets))


# ---------------------------------------------------------------------------
# Model decoding


def decode_word(word: DataWord, n, *configs) -> LossyRun:
    """Parse a word back into the lossy run it encodes and verify every
    step (intermediates are searched through the embedding-downward
    closure). Raises InvalidRun when the word is not a run encoding."""
    levels = stratify(n, *configs)
    k = max(1, n.k)
    state_of = {}
    for lvl, qs in enumerate(levels):
        for q in qs:
            state_of[q] = lvl

    props = [letter_props(word.letter(i)) for i in range(len(word))]
    seps = [i for i, ps in enumerate(props) if "sep" in ps]
    if not seps or seps[0] != 0:
        raise InvalidRun("word does not start with a separator")
    bounds = seps + [len(word)]

    trees = []
    rule_indices = []
    for f in range(len(seps)):
        lo, hi = bounds[f], bounds[f + 1]
        if (hi - lo) % 2 != 0:
            raise InvalidRun("frame with unpaired positions")
        ts = [p for p in props[lo] if _RULE_PROP_RE.match(p)]
        if len(ts) > 1:
            raise InvalidRun("frame with several rule annotations")
        if ts:
            idx = int(_RULE_PROP_RE.match(ts[0]).group(1))
            if idx >= len(n.rules):
                raise InvalidRun(f"unknown rule annotation t{idx}")
            rule_indices.append(idx)
        else:
            rule_indices.append(None)

        node_state: dict[tuple, str] = {}
        root_state = None
        for pos in range(lo, hi, 2):
            ps = props[pos]
            if "odd" not in ps:
                raise InvalidRun("mislaid parity proposition")
            chain = []
            for lvl in range(k + 1):
                cands = [q for q in ps if state_of.get(q) == lvl]
                pad_here = _pad(lvl) in ps if lvl >= 1 else False
                if len(cands) + (1 if pad_here else 0) != 1:
                    raise InvalidRun(f"position {pos} has no unique level-{lvl} state")
                chain.append(None if pad_here else cands[0])
            depth = k
            for lvl in range(1, k + 1):
                if chain[lvl] is None:
                    depth = lvl - 1
                    break
            if any(chain[l] is not None for l in range(depth + 1, k + 1)):
                raise InvalidRun(f"position {pos} pads above a real state")
            if root_state is None:
                root_state = chain[0]
            elif root_state != chain[0]:
                raise InvalidRun("frame with two root states")
            val = word.valuation(pos)
            vals = dict(val)
            prefix = ()
            for lvl in range(1, depth + 1):
                prefix = prefix + (vals[level_attr(lvl)],)
                old = node_state.setdefault(prefix, chain[lvl])
                if old != chain[lvl]:
                    raise InvalidRun("one value block with two states")

        def grow(prefix, state):
            kids = [grow(p, s) for p, s in node_state.items()
                    if len(p) == len(prefix) + 1 and p[:len(prefix)] == prefix]
            return mk_config(state, kids)

        if root_state is None:
            raise InvalidRun("empty frame")
        roots = [grow(p, s) for p, s in node_state.items() if len(p) == 1]
        trees.append(mk_config(root_state, roots))

    if rule_indices[-1] is not None:
        raise InvalidRun("final frame carries a rule annotation")
    if any(idx is None for idx in rule_indices[:-1]):
        raise InvalidRun("intermediate frame without a rule annotation")

    machine = list(reversed(trees))
    rules = [n.rules[idx] for idx in reversed(rule_indices[:-1])]

    intermediates = []
    for s, rule in enumerate(rules):
        src, dst = machine[s], machine[s + 1]
        found = None
        frontier = [src]
        seen = {src}
        while frontier and found is None:
            cand = frontier.pop()
            for path in _match_paths(cand, rule.lhs):
                if _rewrite(cand, path, rule.rhs) == dst:
                    found = cand
                    break
            if found is None:
                for smaller in descents(cand):
                    if smaller not in seen:
                        seen.add(smaller)
                        frontier.append(smaller)
        if found is None:
            raise InvalidRun(f"step {s}: no shrunken configuration rewrites to the successor")
        intermediates.append(found)

    run = LossyRun.make(machine, rules, intermediates)
    run.validate(n)
    return run
