"""Freeze LTL over multi-attributed data words: AST, parser, the
inductive satisfaction relation on finite words, negation and freeze
normal forms, and a bounded-satisfiability search.

Temporal operators are the finite-word ones: X is strict (needs a
successor), WX is its weak dual, U is bounded-existential. store{x}
stores the current valuation restricted to cl(x); chk{x} holds when some
restriction of the stored valuation is value-preservingly order-isomorphic
to the current valuation restricted to cl(x). The existential inside chk
ranges over the stored valuation's domain only: restriction outside the
domain is undefined, so admitting such attributes would be meaningless.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .dataword import DataWord, PartialValuation, equiv, restrict
from .order import QuasiOrder, downward_closure


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class TrueF:
    def __repr__(self):
        return "true"


@dataclass(frozen=True)
class FalseF:
    def __repr__(self):
        return "false"


@dataclass(frozen=True)
class Letter:
    name: str


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    child: "Formula"


@dataclass(frozen=True)
class WeakNext:
    child: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Release:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Globally:
    child: "Formula"


@dataclass(frozen=True)
class Finally:
    child: "Formula"


@dataclass(frozen=True)
class Freeze:
    attr: str
    child: "Formula"


@dataclass(frozen=True)
class Check:
    attr: str


Formula = Union[TrueF, FalseF, Letter, Not, And, Or, Next, WeakNext,
                Until, Release, Globally, Finally, Freeze, Check]

TRUE = TrueF()
FALSE = FalseF()


def conj(parts) -> Formula:
    parts = list(parts)
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


def disj(parts) -> Formula:
    parts = list(parts)
    if not parts:
        return FALSE
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def next_power(phi: Formula, k: int) -> Formula:
    for _ in range(k):
        phi = Next(phi)
    return phi


# ---------------------------------------------------------------------------
# Errors


class FormulaSyntaxError(ValueError):
    def __init__(self, msg, pos):
        super().__init__(f"at offset {pos}: {msg}")
        self.pos = pos


class UnknownLetter(ValueError):
    pass


class NotClosed(ValueError):
    pass


class NoStoredValuation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Parser
#
# Grammar (loosest to tightest): ->  |  &  U/R  unary.  -> and U/R are
# right-associative.  The freeze binder store{x} is special: like a
# quantifier, its scope extends as far to the right as possible, so its
# operand is parsed back at the loosest level.  The other unary operators
# (! X WX G F) bind tightest.

_TOKEN_RE = re.compile(r"\s*(->|[()!&|{}=,]|[A-Za-z_][A-Za-z0-9_]*)")
_KEYWORDS = {"true", "false", "X", "WX", "U", "R", "G", "F", "store", "chk"}


class _Parser:
    def __init__(self, text, alphabet, order):
        self.text = text
        self.alphabet = alphabet
        self.order = order
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                if text[pos:].strip():
                    raise FormulaSyntaxError(
                        f"bad character {text[pos:].strip()[0]!r}", pos)
                break
            self.tokens.append((m.group(1), m.start(1)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, want):
        tok = self.peek()
        if tok != want:
            pos = self.tokens[self.i][1] if self.i < len(self.tokens) \
                else len(self.text)
            raise FormulaSyntaxError(f"expected {want!r}, got {tok!r}", pos)
        return self.take()

    def parse(self):
        phi = self.implies()
        if self.peek() is not None:
            tok, pos = self.tokens[self.i]
            raise FormulaSyntaxError(f"unexpected {tok!r}", pos)
        return phi

    def implies(self):
        left = self.disjunct()
        if self.peek() == "->":
            self.take()
            return Or(Not(left), self.implies())
        return left

    def disjunct(self):
        left = self.conjunct()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conjunct())
        return left

    def conjunct(self):
        left = self.untilexpr()
        while self.peek() == "&":
            self.take()
            left = And(left, self.untilexpr())
        return left

    def untilexpr(self):
        left = self.unary()
        if self.peek() in ("U", "R"):
            op, _ = self.take()
            right = self.untilexpr()
            return Until(left, right) if op == "U" else Release(left, right)
        return left

    def attr_arg(self):
        self.expect("{")
        name, pos = self.take()
        if self.order is not None and name not in self.order.attrs:
            from .order import UnknownAttribute
            raise UnknownAttribute(name)
        self.expect("}")
        return name

    def unary(self):
        tok = self.peek()
        if tok is None:
            raise FormulaSyntaxError("unexpected end of input", len(self.text))
        if tok == "(":
            self.take()
            phi = self.implies()
            self.expect(")")
            return phi
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "X":
            self.take()
            return Next(self.unary())
        if tok == "WX":
            self.take()
            return WeakNext(self.unary())
        if tok == "G":
            self.take()
            return Globally(self.unary())
        if tok == "F":
            self.take()
            return Finally(self.unary())
        if tok == "store":
            self.take()
            x = self.attr_arg()
            return Freeze(x, self.implies())
        if tok == "chk":
            self.take()
            return Check(self.attr_arg())
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        name, pos = self.take()
        if name in _KEYWORDS or not name[0].isalpha() and name[0] != "_":
            raise FormulaSyntaxError(f"unexpected {name!r}", pos)
        if self.alphabet is not None and name not in self.alphabet:
            raise UnknownLetter(name)
        return Letter(name)


def parse(text: str, alphabet=None, order: Optional[QuasiOrder] = None
          ) -> Formula:
    """Parse the ASCII formula grammar. `alphabet`/`order` of None skip
    letter/attribute validation."""
    return _Parser(text, alphabet, order).parse()


_PREC = {Or: 2, And: 3, Until: 4, Release: 4}


def format_formula(phi: Formula) -> str:
    """Unparse with minimal parentheses; parse(format_formula(f)) == f
    up to implication sugar."""
    def wrap(child, parent_prec, side, assoc="l"):
        # parser folds & and | leftward, U and R rightward; parenthesize
        # the child on the non-associating side at equal precedence
        s, prec = go(child)
        if prec < parent_prec or (prec == parent_prec and side != assoc):
            return f"({s})"
        return s

    def go(f):
        t = type(f)
        if t is TrueF:
            return "true", 9
        if t is FalseF:
            return "false", 9
        if t is Letter:
            return f.name, 9
        if t is Check:
            return f"chk{{{f.attr}}}", 9
        if t is Not:
            return f"!{wrap(f.child, 8, 'u')}", 8
        if t is Next:
            return f"X {wrap(f.child, 8, 'u')}", 8
        if t is WeakNext:
            return f"WX {wrap(f.child, 8, 'u')}", 8
        if t is Globally:
            return f"G {wrap(f.child, 8, 'u')}", 8
        if t is Finally:
            return f"F {wrap(f.child, 8, 'u')}", 8
        if t is Freeze:
            # the parser gives a freeze body the widest scope, so the
            # body never needs parentheses but the freeze itself must be
            # wrapped unless it is the rightmost constituent
            s, _ = go(f.child)
            return f"store{{{f.attr}}} {s}", 1
        if t in (Until, Release):
            op = "U" if t is Until else "R"
            return (f"{wrap(f.left, 4, 'l', 'r')} {op} "
                    f"{wrap(f.right, 4, 'r', 'r')}", 4)
        if t is And:
            return f"{wrap(f.left, 3, 'l')} & {wrap(f.right, 3, 'r')}", 3
        if t is Or:
            return f"{wrap(f.left, 2, 'l')} | {wrap(f.right, 2, 'r')}", 2
        raise TypeError(f"not a formula: {f!r}")

    return go(phi)[0]


# ---------------------------------------------------------------------------
# Satisfaction


@dataclass(frozen=True)
class EvalContext:
    word: DataWord
    index: int  # 1-based
    stored: Optional[PartialValuation] = None


def is_closed(phi: Formula) -> bool:
    """True when every chk sits under some store."""
    def scan(f, under):
        t = type(f)
        if t is Check:
            return under
        if t is Freeze:
            return scan(f.child, True)
        if t in (Not, Next, WeakNext, Globally, Finally):
            return scan(f.child, under)
        if t in (And, Or, Until, Release):
            return scan(f.left, under) and scan(f.right, under)
        return True
    return scan(phi, False)


def letters_of(phi: Formula) -> frozenset:
    out = set()

    def scan(f):
        t = type(f)
        if t is Letter:
            out.add(f.name)
        elif t in (Not, Next, WeakNext, Globally, Finally, Freeze):
            scan(f.child)
        elif t in (And, Or, Until, Release):
            scan(f.left)
            scan(f.right)
    scan(phi)
    return frozenset(out)


def evaluate(ctx: EvalContext, phi: Formula) -> bool:
    """The inductive satisfaction relation on finite words."""
    w = ctx.word
    n = len(w)
    if not (1 <= ctx.index <= n):
        raise IndexError(ctx.index)
    q = w.order
    memo = {}

    def ev(f, i, stored):
        # i is 0-based here
        key = (id(f), i, stored)
        hit = memo.get(key)
        if hit is not None:
            return hit
        t = type(f)
        if t is TrueF:
            r = True
        elif t is FalseF:
            r = False
        elif t is Letter:
            r = w.letter(i) == f.name
        elif t is Not:
            r = not ev(f.child, i, stored)
        elif t is And:
            r = ev(f.left, i, stored) and ev(f.right, i, stored)
        elif t is Or:
            r = ev(f.left, i, stored) or ev(f.right, i, stored)
        elif t is Next:
            r = i + 1 < n and ev(f.child, i + 1, stored)
        elif t is WeakNext:
            r = i + 1 >= n or ev(f.child, i + 1, stored)
        elif t is Until:
            r = False
            for k in range(i, n):
                if ev(f.right, k, stored):
                    r = True
                    break
                if not ev(f.left, k, stored):
                    break
        elif t is Release:
            # dual of until: right holds up to and including the first
            # position where left holds, or to the end of the word
            r = True
            for k in range(i, n):
                if not ev(f.right, k, stored):
                    r = False
                    break
                if ev(f.left, k, stored):
                    break
        elif t is Globally:
            r = all(ev(f.child, k, stored) for k in range(i, n))
        elif t is Finally:
            r = any(ev(f.child, k, stored) for k in range(i, n))
        elif t is Freeze:
            r = ev(f.child, i, restrict(w.valuation(i), f.attr, q))
        elif t is Check:
            if stored is None:
                raise NoStoredValuation(f.attr)
            cur = restrict(w.valuation(i), f.attr, q)
            r = any(equiv(restrict(stored, y, q), cur, q)
                    for y in stored.domain())
        else:
            raise TypeError(f"not a formula: {f!r}")
        memo[key] = r
        return r

    return ev(phi, ctx.index - 1, ctx.stored)


def models(w: DataWord, phi: Formula) -> bool:
    """w satisfies phi (evaluated at the first position, nothing stored)."""
    if not is_closed(phi):
        raise NotClosed(format_formula(phi))
    return evaluate(EvalContext(w, 1), phi)


# ---------------------------------------------------------------------------
# Negation normal form


def nnf(phi: Formula) -> Formula:
    t = type(phi)
    if t is Not:
        f = phi.child
        s = type(f)
        if s is TrueF:
            return FALSE
        if s is FalseF:
            return TRUE
        if s in (Letter, Check):
            return phi
        if s is Not:
            return nnf(f.child)
        if s is And:
            return Or(nnf(Not(f.left)), nnf(Not(f.right)))
        if s is Or:
            return And(nnf(Not(f.left)), nnf(Not(f.right)))
        if s is Next:
            return WeakNext(nnf(Not(f.child)))
        if s is WeakNext:
            return Next(nnf(Not(f.child)))
        if s is Until:
            return Release(nnf(Not(f.left)), nnf(Not(f.right)))
        if s is Release:
            return Until(nnf(Not(f.left)), nnf(Not(f.right)))
        if s is Globally:
            return Finally(nnf(Not(f.child)))
        if s is Finally:
            return Globally(nnf(Not(f.child)))
        if s is Freeze:
            return Freeze(f.attr, nnf(Not(f.child)))
        raise TypeError(f"not a formula: {f!r}")
    if t in (TrueF, FalseF, Letter, Check):
        return phi
    if t in (And, Or, Until, Release):
        return t(nnf(phi.left), nnf(phi.right))
    if t in (Next, WeakNext, Globally, Finally):
        return t(nnf(phi.child))
    if t is Freeze:
        return Freeze(phi.attr, nnf(phi.child))
    raise TypeError(f"not a formula: {phi!r}")


# ---------------------------------------------------------------------------
# Freeze normal form
#
# Requires the attribute order to be a tree-shaped partial order of uniform
# depth (the shape linearization produces). Rewrites until every freeze is
# immediately followed by X, WX, or a (possibly negated) chk, and every
# surviving store{x}chk{y} pair is oriented so x's branch starts no later
# than y's.


def branch_structure(q: QuasiOrder):
    """In-order leaf enumeration of a forest-shaped partial order.

    Returns (leaves, sb, lb, lvl): leaves in DFS order with name-sorted
    roots and children; sb/lb map each attribute to the first/last leaf
    index (1-based) whose closure contains it; lvl is |cl(x)|.
    """
    children = {a: [] for a in q.attrs}
    roots = []
    for a in sorted(q.attrs):
        below = [b for b in q.attrs if q.strictly_less(b, a)]
        if not below:
            roots.append(a)
        else:
            parent = max(below, key=lambda b: len(downward_closure(q, b)))
            children[parent].append(a)
    leaves = []

    def dfs(a):
        if not children[a]:
            leaves.append(a)
        for c in sorted(children[a]):
            dfs(c)
    for r in roots:
        dfs(r)

    sb, lb, lvl = {}, {}, {}
    for a in q.attrs:
        blocks = [j for j, leaf in enumerate(leaves, 1)
                  if a in downward_closure(q, leaf)]
        sb[a], lb[a] = min(blocks), max(blocks)
        lvl[a] = len(downward_closure(q, a))
    return leaves, sb, lb, lvl


def freeze_normal_form(phi: Formula, q: QuasiOrder) -> Formula:
    _, sb, _, lvl = branch_structure(q)

    def ancestor_at(x, level):
        for p in downward_closure(q, x):
            if lvl[p] == level:
                return p
        raise ValueError(f"no ancestor of {x} at level {level}")

    def resolve_check(x, y, positive):
        # store{x} chk{y} at one position
        if q.leq(y, x):
            return TRUE if positive else FALSE
        if lvl[y] > lvl[x]:
            return FALSE if positive else TRUE
        p = ancestor_at(x, lvl[y])
        a, b = (p, y) if sb[p] <= sb[y] else (y, p)
        inner = Check(b) if positive else Not(Check(b))
        return Freeze(a, inner)

    def push(x, f):
        # normalize store{x} f, f already in nnf
        t = type(f)
        if t in (TrueF, FalseF, Letter):
            return f
        if t is Not and type(f.child) is Letter:
            return f
        if t is Check:
            return resolve_check(x, f.attr, True)
        if t is Not and type(f.child) is Check:
            return resolve_check(x, f.child.attr, False)
        if t is And:
            return And(push(x, f.left), push(x, f.right))
        if t is Or:
            return Or(push(x, f.left), push(x, f.right))
        if t is Freeze:
            return push(f.attr, f.child)
        if t is Next:
            return Freeze(x, Next(walk(f.child)))
        if t is WeakNext:
            return Freeze(x, WeakNext(walk(f.child)))
        if t is Until:
            # one unfolding step: l U r == r | (l & X(l U r))
            l, r = walk(f.left), walk(f.right)
            return Or(push(x, r), And(push(x, l),
                                      Freeze(x, Next(Until(l, r)))))
        if t is Release:
            l, r = walk(f.left), walk(f.right)
            return And(push(x, r), Or(push(x, l),
                                      Freeze(x, WeakNext(Release(l, r)))))
        if t is Globally:
            c = walk(f.child)
            return And(push(x, c), Freeze(x, WeakNext(Globally(c))))
        if t is Finally:
            c = walk(f.child)
            return Or(push(x, c), Freeze(x, Next(Finally(c))))
        raise TypeError(f"unexpected under freeze: {f!r}")

    def walk(f):
        t = type(f)
        if t in (TrueF, FalseF, Letter, Check, Not):
            return f
        if t in (And, Or, Until, Release):
            return t(walk(f.left), walk(f.right))
        if t in (Next, WeakNext, Globally, Finally):
            return t(walk(f.child))
        if t is Freeze:
            return push(f.attr, walk(f.child))
        raise TypeError(f"not a formula: {f!r}")

    return walk(nnf(phi))


# ---------------------------------------------------------------------------
# Bounded satisfiability


@dataclass(frozen=True)
class SearchLimits:
    max_nodes: int = 200_000


@dataclass(frozen=True)
class Witness:
    word: DataWord
    nodes: int


@dataclass(frozen=True)
class NoWitnessUpTo:
    max_len: int
    nodes: int


@dataclass(frozen=True)
class LimitExhausted:
    max_len: int
    nodes: int


T, F, U = 1, 0, -1  # three-valued: definite true/false, unknown


def _k_not(a):
    return U if a == U else (F if a == T else T)


def _k_and(a, b):
    if a == F or b == F:
        return F
    if a == T and b == T:
        return T
    return U


def _k_or(a, b):
    if a == T or b == T:
        return T
    if a == F and b == F:
        return F
    return U


def eval3(w: DataWord, phi: Formula, open_end: bool) -> int:
    """Three-valued verdict at position 1: T/F only when every completion
    of the word agrees (when open_end, any extension; otherwise the word
    is final and the verdict is two-valued)."""
    n = len(w)
    q = w.order
    memo = {}

    def ev(f, i, stored):
        key = (id(f), i, stored)
        hit = memo.get(key)
        if hit is not None:
            return hit
        t = type(f)
        if t is TrueF:
            r = T
        elif t is FalseF:
            r = F
        elif t is Letter:
            r = T if w.letter(i) == f.name else F
        elif t is Not:
            r = _k_not(ev(f.child, i, stored))
        elif t is And:
            r = _k_and(ev(f.left, i, stored), ev(f.right, i, stored))
        elif t is Or:
            r = _k_or(ev(f.left, i, stored), ev(f.right, i, stored))
        elif t is Next:
            if i + 1 < n:
                r = ev(f.child, i + 1, stored)
            else:
                r = U if open_end else F
        elif t is WeakNext:
            if i + 1 < n:
                r = ev(f.child, i + 1, stored)
            else:
                r = U if open_end else T
        elif t is Until:
            # r | (l & X ...), right to left
            r = U if open_end else F
            for k in range(n - 1, i - 1, -1):
                r = _k_or(ev(f.right, k, stored),
                          _k_and(ev(f.left, k, stored), r))
        elif t is Release:
            r = U if open_end else T
            for k in range(n - 1, i - 1, -1):
                r = _k_and(ev(f.right, k, stored),
                           _k_or(ev(f.left, k, stored), r))
        elif t is Globally:
            r = U if open_end else T
            for k in range(n - 1, i - 1, -1):
                r = _k_and(ev(f.child, k, stored), r)
        elif t is Finally:
            r = U if open_end else F
            for k in range(n - 1, i - 1, -1):
                r = _k_or(ev(f.child, k, stored), r)
        elif t is Freeze:
            r = ev(f.child, i, restrict(w.valuation(i), f.attr, q))
        elif t is Check:
            if stored is None:
                raise NoStoredValuation(f.attr)
            cur = restrict(w.valuation(i), f.attr, q)
            r = T if any(equiv(restrict(stored, y, q), cur, q)
                         for y in stored.domain()) else F
        else:
            raise TypeError(f"not a formula: {f!r}")
        memo[key] = r
        return r

    return ev(phi, 0, None)


def _canonical_valuations(attrs, used):
    """All canonical next-position valuations: each attribute (in sorted
    order) takes an already-used value or the next fresh one."""
    attrs = sorted(attrs)

    def go(i, used_now, acc):
        if i == len(attrs):
            yield dict(acc)
            return
        for v in range(used_now + 1):
            acc[attrs[i]] = v
            yield from go(i + 1, max(used_now, v + 1), acc)
        acc.pop(attrs[i], None)

    yield from go(0, used, {})


def bounded_sat(phi: Formula, alphabet, q: QuasiOrder, max_len: int,
                limits: SearchLimits = SearchLimits()):
    """Iterative-deepening search for a canonical witness word.

    Words are enumerated in lexicographic order (letters sorted, values in
    first-occurrence numbering), so a Witness is the least witness of
    minimal length. Prefixes whose three-valued verdict is already
    definite-false are pruned; this is sound because a definite verdict on
    an open prefix persists under every extension.
    """
    if not is_closed(phi):
        raise NotClosed(format_formula(phi))
    letters = sorted(alphabet)
    nodes = 0

    for target in range(1, max_len + 1):
        stack = [(tuple(), 0)]  # (positions so far, distinct values used)
        while stack:
            prefix, used = stack.pop()
            if len(prefix) == target:
                w = DataWord(q, prefix)
                nodes += 1
                if nodes > limits.max_nodes:
                    return LimitExhausted(max_len, nodes)
                if eval3(w, phi, open_end=False) == T:
                    assert models(w, phi)
                    return Witness(w, nodes)
                continue
            children = []
            for letter in letters:
                for val in _canonical_valuations(q.attrs, used):
                    ext = prefix + ((letter, tuple(sorted(val.items()))),)
                    nodes += 1
                    if nodes > limits.max_nodes:
                        return LimitExhausted(max_len, nodes)
                    w = DataWord(q, ext)
                    verdict = eval3(w, phi, open_end=len(ext) < target)
                    if verdict == F:
                        continue
                    nused = max([used] + [v + 1 for v in val.values()])
                    children.append((ext, nused))
            stack.extend(reversed(children))
    return NoWitnessUpTo(max_len, nodes)
