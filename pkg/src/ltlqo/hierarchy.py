"""Ordinals in Cantor normal form below epsilon_0, fundamental sequences,
a direct Hardy evaluator, the multiset encoding of ordinals into nested
configurations, depth-first copy/minimum macro expansion, the
Hardy-computation rule groups (forward and backward), and the budgeted
two-counter machine reduction.

Two system layouts are produced: the direct nested layout (ordinal
structure as nested omega nodes) and a flattened one where an addend
w^j is a single leaf state `w^j`, saving one nesting level. The flat
layout is the desk-scale workhorse; the direct layout is cross-checked
against it on small instances.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import total_ordering

from .ncs import Ncs, NcsConfig, NcsRule, bare, mk_config


class NotLimit(ValueError):
    pass


class FuelExhausted(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Ordinals


@total_ordering
@dataclass(frozen=True)
class Ordinal:
    """w^e1 + ... + w^ek with exponents non-increasing; () is zero."""
    exponents: tuple["Ordinal", ...] = ()

    def __post_init__(self):
        for a, b in zip(self.exponents, self.exponents[1:]):
            if a < b:
                raise ValueError("exponents must be non-increasing")

    def is_zero(self):
        return not self.exponents

    def is_successor(self):
        return bool(self.exponents) and self.exponents[-1].is_zero()

    def is_limit(self):
        return bool(self.exponents) and not self.exponents[-1].is_zero()

    def __lt__(self, other):
        return self.exponents_cmp(other) < 0

    def exponents_cmp(self, other) -> int:
        for a, b in zip(self.exponents, other.exponents):
            if a != b:
                return -1 if a < b else 1
        if len(self.exponents) != len(other.exponents):
            return -1 if len(self.exponents) < len(other.exponents) else 1
        return 0

    def __add__(self, other: "Ordinal") -> "Ordinal":
        if not other.exponents:
            return self
        head = other.exponents[0]
        kept = tuple(e for e in self.exponents if e >= head)
        return Ordinal(kept + other.exponents)

    def __repr__(self):
        return format_ordinal(self)


ZERO = Ordinal()
ONE = Ordinal((ZERO,))
OMEGA = Ordinal((ONE,))


def omega_power(e: Ordinal) -> Ordinal:
    return Ordinal((e,))


def from_int(n: int) -> Ordinal:
    return Ordinal((ZERO,) * n)


def to_int(a: Ordinal) -> int:
    if any(not e.is_zero() for e in a.exponents):
        raise ValueError(f"{a} is not finite")
    return len(a.exponents)


def omega_tower(n: int) -> Ordinal:
    """w, w^w, w^w^w, ... (n >= 1)."""
    a = OMEGA
    for _ in range(n - 1):
        a = omega_power(a)
    return a


def fs(lam: Ordinal, n: int) -> Ordinal:
    """n-th fundamental sequence element of a limit ordinal."""
    if not lam.is_limit():
        raise NotLimit(format_ordinal(lam))
    head, last = lam.exponents[:-1], lam.exponents[-1]
    if last.is_successor():
        step = Ordinal(last.exponents[:-1])  # predecessor of the exponent
        return Ordinal(head + (step,) * n)
    return Ordinal(head + (fs(last, n),))


def hardy(alpha: Ordinal, n: int, fuel: int = 10 ** 6) -> int:
    """H^alpha(n) for the increment function, by structural recursion:
    successor steps bump n, limit steps take the n-th fs element."""
    while not alpha.is_zero():
        if alpha.is_successor():
            alpha = Ordinal(alpha.exponents[:-1])
            n += 1
            fuel -= 1
            if fuel < 0:
                raise FuelExhausted(f"more than the allotted increments")
        else:
            alpha = fs(alpha, n)
    return n


_ORD_TOK = re.compile(r"\s*(\^|\+|\*|\(|\)|w|\d+)")


def parse_ordinal(text: str) -> Ordinal:
    """`0`, `w`, `w^a`, `a+b`, `a*int`, integers; e.g. `w^w + w^2*2 + 1`."""
    toks = []
    pos = 0
    while pos < len(text):
        m = _ORD_TOK.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ValueError(f"bad ordinal syntax at {text[pos:]!r}")
            break
        toks.append(m.group(1))
        pos = m.end()

    def expr(i):
        total, i = term(i)
        while i < len(toks) and toks[i] == "+":
            nxt, i = term(i + 1)
            total = total + nxt
        return total, i

    def term(i):
        a, i = factor(i)
        if i < len(toks) and toks[i] == "*":
            if i + 1 >= len(toks) or not toks[i + 1].isdigit():
                raise ValueError("* needs an integer repeat count")
            reps = int(toks[i + 1])
            i += 2
            total = ZERO
            for _ in range(reps):
                total = total + a
            return total, i
        return a, i

    def factor(i):
        if i >= len(toks):
            raise ValueError("unexpected end of ordinal")
        t = toks[i]
        if t == "(":
            a, i = expr(i + 1)
            if i >= len(toks) or toks[i] != ")":
                raise ValueError("unbalanced parenthesis")
            return a, i + 1
        if t == "w":
            if i + 1 < len(toks) and toks[i + 1] == "^":
                e, j = factor(i + 2)
                return omega_power(e), j
            return OMEGA, i + 1
        if t.isdigit():
            return from_int(int(t)), i + 1
        raise ValueError(f"unexpected token {t!r}")

    a, i = expr(0)
    if i != len(toks):
        raise ValueError(f"trailing ordinal input: {toks[i:]}")
    return a


def format_ordinal(a: Ordinal) -> str:
    if a.is_zero():
        return "0"
    parts = []
    run = None
    count = 0

    def flush():
        if run is None:
            return
        if run.is_zero():
            parts.append(str(count))  # a run of w^0 is just an integer
        else:
            base = _fmt_term(run)
            parts.append(base if count == 1 else f"{base}*{count}")

    for e in a.exponents:
        if e == run:
            count += 1
        else:
            flush()
            run, count = e, 1
    flush()
    return " + ".join(parts)


def _fmt_term(e: Ordinal) -> str:
    if e == ONE:
        return "w"
    if all(x.is_zero() for x in e.exponents):
        return f"w^{len(e.exponents)}"
    inner = format_ordinal(e)
    if len(e.exponents) > 1:
        return f"w^({inner})"
    return f"w^{inner}"


# ---------------------------------------------------------------------------
# Multiset encodings


def encode_ordinal(alpha: Ordinal) -> tuple[NcsConfig, ...]:
    """The nested multiset: one w-node per CNF addend, children encode
    the exponent."""
    return tuple(mk_config("ω", encode_ordinal(e))
                 for e in alpha.exponents)


def decode_multiset(children) -> Ordinal:
    exps = sorted((decode_multiset(c.children) for c in children),
                  reverse=True)
    return Ordinal(tuple(exps))


def hardy_config(alpha: Ordinal, n: int, control: str = "main") -> NcsConfig:
    return mk_config(control, [
        mk_config("s", encode_ordinal(alpha)),
        mk_config("c", [bare("1")] * n),
    ])


def decode_hardy_config(c: NcsConfig, control: str = "main"):
    """(alpha, n) from a main(s(...) + c(...)) shape; None if the shape
    does not match (mid-gadget configurations)."""
    if c.state != control:
        return None
    s_nodes = [x for x in c.children if x.state == "s"]
    c_nodes = [x for x in c.children if x.state == "c"]
    if len(s_nodes) != 1 or len(c_nodes) != 1 or len(c.children) != 2:
        return None
    if any(x.state != "ω" for x in s_nodes[0].children):
        return None
    if any(x.state != "1" or x.children for x in c_nodes[0].children):
        return None
    return decode_multiset(s_nodes[0].children), len(c_nodes[0].children)


def wstate(j: int) -> str:
    return f"w^{j}"


def flat_encode(alpha: Ordinal, lmax: int) -> tuple[NcsConfig, ...]:
    """Flattened encoding: addend w^j becomes a bare state w^j; only
    finite exponents <= lmax representable."""
    out = []
    for e in alpha.exponents:
        j = to_int(e)
        if j > lmax:
            raise ValueError(f"exponent {j} exceeds flat ceiling {lmax}")
        out.append(bare(wstate(j)))
    return tuple(out)


def flat_config(alpha: Ordinal, n: int, lmax: int,
                control: str = "main") -> NcsConfig:
    return mk_config(control, [
        mk_config("s", flat_encode(alpha, lmax)),
        mk_config("c", [bare("1")] * n),
    ])


def decode_flat_config(c: NcsConfig, control: str = "main"):
    if c.state != control:
        return None
    s_nodes = [x for x in c.children if x.state == "s"]
    c_nodes = [x for x in c.children if x.state == "c"]
    if len(s_nodes) != 1 or len(c_nodes) != 1 or len(c.children) != 2:
        return None
    exps = []
    for x in s_nodes[0].children:
        m = re.fullmatch(r"w\^(\d+)", x.state)
        if not m or x.children:
            return None
        exps.append(from_int(int(m.group(1))))
    if any(x.state != "1" or x.children for x in c_nodes[0].children):
        return None
    alpha = Ordinal(tuple(sorted(exps, reverse=True)))
    return alpha, len(c_nodes[0].children)


# ---------------------------------------------------------------------------
# cp / min macro expansion
#
# Depth-first copy with three markers: `i` walks the source (consuming it),
# `o1`/`o2` mark the copies under construction. Intermediate control states
# remember the state of the node the source cursor sits on. Descending
# temporarily renames the active copy node after the remembered state and
# opens a fresh marker inside it; ascending swaps the pair back, sealing
# the child copy with its proper state. The source node is deleted when
# its subtree has been traversed, so interrupted runs lose exactly the
# untraversed part: every outcome stays below the original.


def _paths_upto(inner, maxlen):
    for m in range(maxlen + 1):
        yield from itertools.product(inner, repeat=m)


def expand_cp(t: str, src: tuple, dst: tuple, inner, k: int
              ) -> list[NcsRule]:
    l = len(src)
    assert len(dst) == l >= 2
    chain, chain_d = src[1:-1], dst[1:-1]
    ql = src[-1]
    inner = sorted(inner)
    qs = [ql] + inner
    rules = [NcsRule(src, (f"cpi:{t}:{ql}",) + chain + ("i",)),
             NcsRule((f"cpi:{t}:{ql}",) + chain,
                     (f"cpix:{t}:{ql}",) + chain + ("o1",)),
             NcsRule((f"cpix:{t}:{ql}",) + chain_d,
                     (f"cp:{t}:{ql}",) + chain_d + ("o2",))]
    # path intermediates: real states plus the source-end name, which the
    # descend step temporarily reuses for the copy under construction
    depth = k - len(chain) - 2
    for q in qs:
        for rv in _paths_upto(qs, depth):
            rules.append(NcsRule(
                (f"cp:{t}:{q}",) + chain + rv + ("o1",),
                (f"cpd:{t}:{q}",) + chain + rv + (q, "o1")))
            rules.append(NcsRule(
                (f"cpd:{t}:{q}",) + chain_d + rv + ("o2",),
                (f"cpdx:{t}:{q}",) + chain_d + rv + (q, "o2")))
            for r2 in inner:
                rules.append(NcsRule(
                    (f"cpdx:{t}:{q}",) + chain + rv + ("i", r2),
                    (f"cp:{t}:{r2}",) + chain + rv + (q, "i")))
            for r2 in qs:
                rules.append(NcsRule(
                    (f"cp:{t}:{q}",) + chain + rv + (r2, "o1"),
                    (f"cpu:{t}:{q}",) + chain + rv + ("o1", q)))
                rules.append(NcsRule(
                    (f"cpu:{t}:{q}",) + chain_d + rv + (r2, "o2"),
                    (f"cpux:{t}:{q}",) + chain_d + rv + ("o2", q)))
                rules.append(NcsRule(
                    (f"cpux:{t}:{q}",) + chain + rv + (r2, "i"),
                    (f"cp:{t}:{r2}",) + chain + rv + ("i",)))
        rules.append(NcsRule((f"cp:{t}:{q}",) + chain + ("i",),
                             (f"cpf:{t}",) + chain))
    rules.append(NcsRule((f"cpf:{t}",) + chain + ("o1",),
                         (f"cpfx:{t}",) + chain + (ql,)))
    rules.append(NcsRule((f"cpfx:{t}",) + chain_d + ("o2",), dst))
    return rules


def expand_min(t: str, src: tuple, dst: tuple, inner, k: int
               ) -> list[NcsRule]:
    l = len(src)
    assert len(dst) == l >= 2
    chain, chain_d = src[1:-1], dst[1:-1]
    ql, qld = src[-1], dst[-1]
    inner = sorted(inner)
    qs = [ql] + inner
    rules = [NcsRule(src, (f"mini:{t}:{ql}",) + chain + ("i1",)),
             NcsRule((f"mini:{t}:{ql}",) + chain_d + (qld,),
                     (f"minix:{t}:{ql}",) + chain_d + ("i2",)),
             NcsRule((f"minix:{t}:{ql}",) + chain_d,
                     (f"min:{t}:{ql}",) + chain_d + ("o",))]
    depth = k - len(chain) - 2
    for q in qs:
        for rv in _paths_upto(qs, depth):
            rules.append(NcsRule(
                (f"min:{t}:{q}",) + chain_d + rv + ("o",),
                (f"mind:{t}:{q}",) + chain_d + rv + (q, "o")))
            for r2 in inner:
                # descend only into a child state present on both sides;
                # the control carries (pair state, child state) so the
                # target side reseals with the same temporary name
                rules.append(NcsRule(
                    (f"mind:{t}:{q}",) + chain + rv + ("i1", r2),
                    (f"mindx:{t}:{q}>{r2}",) + chain + rv + (q, "i1")))
                rules.append(NcsRule(
                    (f"mindx:{t}:{q}>{r2}",) + chain_d + rv + ("i2", r2),
                    (f"min:{t}:{r2}",) + chain_d + rv + (q, "i2")))
            for r2 in qs:
                rules.append(NcsRule(
                    (f"min:{t}:{q}",) + chain_d + rv + (r2, "o"),
                    (f"minu:{t}:{q}",) + chain_d + rv + ("o", q)))
                rules.append(NcsRule(
                    (f"minu:{t}:{q}",) + chain + rv + (r2, "i1"),
                    (f"minux:{t}:{r2}",) + chain + rv + ("i1",)))
                rules.append(NcsRule(
                    (f"minux:{t}:{q}",) + chain_d + rv + (q, "i2"),
                    (f"min:{t}:{q}",) + chain_d + rv + ("i2",)))
        rules.append(NcsRule((f"min:{t}:{q}",) + chain + ("i1",),
                             (f"minf:{t}",) + chain))
    rules.append(NcsRule((f"minf:{t}",) + chain_d + ("i2",),
                         (f"minfx:{t}",) + chain_d))
    rules.append(NcsRule((f"minfx:{t}",) + chain_d + ("o",), dst))
    return rules


# ---------------------------------------------------------------------------
# Hardy rule groups, direct (nested) layout
#
# Four run families over C_{a,n} = main(s(M_a) + c(1 x n)):
#   successor down: remove an addend, gain a token
#   successor up:   spend a token, add a w^0 addend
#   limit down:     replace the (guessed-)smallest addend w^(b+1) by up to
#                   n copies of w^b, re-counting the budget through an
#                   auxiliary c' shuttle
#   limit up:       merge marked equal addends, counting deletions into
#                   the shuttle as the new budget, then bump the exponent
# The recursion over nested limit exponents walks an s-chain on the source
# side and mirrors it with an s'-chain on the rebuild side. Markers a_1
# (current minimum candidate) and a_2 (element under comparison) drive the
# descending-order selection via the copy and minimum macros.


OMEGA_STATE = "ω"


def build_hardy_ncs(k: int, l: int) -> Ncs:
    if k < 3:
        raise ValueError("direct layout needs nesting depth at least 3")
    if l > k - 3:
        # the exponent-increment row at depth d touches level d+3
        raise ValueError("recursion depth does not fit the nesting depth")
    W = OMEGA_STATE
    inner = [W]
    rules: list[NcsRule] = []
    R = NcsRule

    # successor steps
    rules += [R(("main", "s", W), ("R1", "s")),
              R(("R1", "c"), ("main", "c", "1")),
              R(("main", "c", "1"), ("R2", "c")),
              R(("R2", "s"), ("main", "s", W))]

    for fam in ("R3", "R4"):
        rules.append(R(("main", "s", W), (f"{fam}:0", "s", "a_1")))
        for d in range(l + 1):
            sch = ("s",) * d
            pch = ("s'",) * d
            # extend the rebuild chain one level
            rules.append(R((f"{fam}:{d}",) + pch,
                           (f"{fam}s:{d}",) + pch + ("s'",)))
            # selection loop: mark, copy the candidate out, keep the min
            rules.append(R((f"{fam}s:{d}", "s") + sch + (W,),
                           (f"{fam}sx:{d}", "s") + sch + ("a_2",)))
            rules += expand_cp(
                f"{fam}selcp{d}",
                (f"{fam}sx:{d}", "s") + sch + ("a_1",),
                (f"{fam}sy:{d}", "s'") + pch + (W,), inner, k)
            rules += expand_min(
                f"{fam}selmin{d}",
                (f"{fam}sy:{d}", "s") + sch + ("a_2",),
                (f"{fam}s:{d}", "s") + sch + ("a_1",), inner, k)
            if d < l:
                # candidate exponent guessed limit: recurse into it
                rules.append(R((f"{fam}s:{d}", "s") + sch + ("a_1", W),
                               (f"{fam}:{d + 1}", "s") + sch + ("s", "a_1")))

    for d in range(l + 1):
        sch = ("s",) * d
        pch = ("s'",) * d
        # forward limit step: candidate exponent guessed successor --
        # drop one unit, then copy the decremented addend per token
        rules.append(R(("R3s:" + str(d), "s") + sch + ("a_1", W),
                       (f"R3cpre:{d}", "s") + sch + ("a_1",)))
        rules.append(R((f"R3cpre:{d}",), (f"R3c:{d}", "c'")))
        rules += expand_cp(
            f"R3copy{d}",
            (f"R3c:{d}", "s") + sch + ("a_1",),
            (f"R3cx:{d}", "s'") + pch + (W,), [OMEGA_STATE], k)
        rules.append(R((f"R3cx:{d}", "c", "1"), (f"R3cy:{d}", "c")))
        rules.append(R((f"R3cy:{d}", "c'"), (f"R3c:{d}", "c'", "1")))
        rules.append(R((f"R3c:{d}", "c"), (f"R3q:{d}",)))
        rules.append(R((f"R3q:{d}", "c'"), (f"R3qx:{d}", "c")))
        rules.append(R((f"R3qx:{d}", "s"), (f"R3qy:{d}",)))
        rules.append(R((f"R3qy:{d}", "s'") + pch,
                       ("main", "s") + (OMEGA_STATE,) * d))

        # backward limit step: consume equal addends, counting deletions
        rules.append(R((f"R4s:{d}", "s") + sch + (OMEGA_STATE,),
                       (f"R4mpre:{d}", "s") + sch + ("a_2",)))
        rules.append(R((f"R4mpre:{d}",), (f"R4m:{d}", "c'")))
        rules.append(R((f"R4m:{d}", "s") + sch + (OMEGA_STATE,),
                       (f"R4m:{d}", "s") + sch + ("a_2",)))
        rules += expand_min(
            f"R4merge{d}",
            (f"R4m:{d}", "s") + sch + ("a_2",),
            (f"R4mw:{d}", "s") + sch + ("a_1",), [OMEGA_STATE], k)
        rules.append(R((f"R4mw:{d}", "c", "1"), (f"R4mx:{d}", "c")))
        rules.append(R((f"R4mx:{d}", "c'"), (f"R4m:{d}", "c'", "1")))
        rules.append(R((f"R4m:{d}", "s") + sch + ("a_1",),
                       (f"R4q:{d}", "s") + sch + ("a_1", OMEGA_STATE)))
        rules += expand_cp(
            f"R4copy{d}",
            (f"R4q:{d}", "s") + sch + ("a_1",),
            (f"R4qw:{d}", "s'") + pch + (OMEGA_STATE,), [OMEGA_STATE], k)
        rules.append(R((f"R4qw:{d}", "c"), (f"R4qx:{d}",)))
        rules.append(R((f"R4qx:{d}", "c'"), (f"R4qy:{d}", "c")))
        rules.append(R((f"R4qy:{d}", "s"), (f"R4qz:{d}",)))
        rules.append(R((f"R4qz:{d}", "s'") + pch,
                       ("main", "s") + (OMEGA_STATE,) * d))

    states = set()
    for r in rules:
        states.update(r.lhs)
        states.update(r.rhs)
    return Ncs(k, frozenset(states), tuple(dict.fromkeys(rules)))


# ---------------------------------------------------------------------------
# Hardy rule groups, flat layout (addend w^j as a leaf state)


def build_hardy_flat(l: int) -> Ncs:
    """2-level system implementing the same four run families over
    flat_config encodings, exponents up to l."""
    rules: list[NcsRule] = []
    R = NcsRule
    for j in range(l + 1):
        w = wstate(j)
        # successor down: remove any addend, gain a token
        rules.append(R(("main", "s", w), ("R1f", "s")))
    rules.append(R(("R1f", "c"), ("main", "c", "1")))
    # successor up
    rules.append(R(("main", "c", "1"), ("R2f", "c")))
    rules.append(R(("R2f", "s"), ("main", "s", wstate(0))))
    for j in range(l):
        lo, hi = wstate(j), wstate(j + 1)
        # limit down: delete one w^(j+1), then emit w^j per token paid
        # into the shuttle; unpaid tokens are lost with the old budget
        rules.append(R(("main", "s", hi), (f"R3f:{j}", "s")))
        rules.append(R((f"R3f:{j}",), (f"R3fa:{j}", "c'")))
        rules.append(R((f"R3fa:{j}", "c", "1"), (f"R3fb:{j}", "c")))
        rules.append(R((f"R3fb:{j}", "c'"), (f"R3fc:{j}", "c'", "1")))
        rules.append(R((f"R3fc:{j}", "s"), (f"R3fa:{j}", "s", lo)))
        rules.append(R((f"R3fa:{j}", "c"), (f"R3fd:{j}",)))
        rules.append(R((f"R3fd:{j}", "c'"), ("main", "c")))
        # limit up: every consumed w^j (the trigger included) costs one
        # token and credits the shuttle, strictly larger addends move one
        # by one onto a rebuild node, and the finish deletes the old
        # multiset and budget wholesale before bumping the exponent on
        # the rebuild side.  Each surviving token is budget-backed and
        # each survivor addend is either moved as-is or the single bumped
        # one, which keeps the Hardy value from growing on any
        # interleaving, abandoned or completed.
        rules.append(R(("main", "s", lo), (f"R4f:{j}", "s")))
        rules.append(R((f"R4f:{j}", "c", "1"), (f"R4fg:{j}", "c")))
        rules.append(R((f"R4fg:{j}",), (f"R4fh:{j}", "s'")))
        rules.append(R((f"R4fh:{j}",), (f"R4fi:{j}", "c'")))
        rules.append(R((f"R4fi:{j}", "c'"), (f"R4fa:{j}", "c'", "1")))
        rules.append(R((f"R4fa:{j}", "s", lo), (f"R4fb:{j}", "s")))
        rules.append(R((f"R4fb:{j}", "c", "1"), (f"R4fc:{j}", "c")))
        rules.append(R((f"R4fc:{j}", "c'"), (f"R4fa:{j}", "c'", "1")))
        for i in range(j + 1, l + 1):
            rules.append(R((f"R4fa:{j}", "s", wstate(i)),
                           (f"R4fp:{j}:{i}", "s")))
            rules.append(R((f"R4fp:{j}:{i}", "s'"),
                           (f"R4fa:{j}", "s'", wstate(i))))
        rules.append(R((f"R4fa:{j}", "s"), (f"R4fd:{j}",)))
        rules.append(R((f"R4fd:{j}", "s'"), (f"R4fe:{j}", "s")))
        rules.append(R((f"R4fe:{j}", "s"), (f"R4fq:{j}", "s", hi)))
        rules.append(R((f"R4fq:{j}", "c"), (f"R4fr:{j}",)))
        rules.append(R((f"R4fr:{j}", "c'"), ("main", "c")))
    states = set()
    for r in rules:
        states.update(r.lhs)
        states.update(r.rhs)
    return Ncs(2, frozenset(states), tuple(dict.fromkeys(rules)))


# ---------------------------------------------------------------------------
# Budgeted two-counter machines


@dataclass(frozen=True)
class MinskyMachine:
    states: tuple[str, ...]
    transitions: tuple[tuple[str, str, str, str], ...]  # (q, op, counter, q')
    initial: str
    final: str

    def __post_init__(self):
        for q, op, cnt, q2 in self.transitions:
            if op not in ("inc", "dec", "zero"):
                raise ValueError(f"unknown op {op}")
            if cnt not in ("c1", "c2"):
                raise ValueError(f"unknown counter {cnt}")
            if q not in self.states or q2 not in self.states:
                raise ValueError("transition over undeclared state")

    def size(self) -> int:
        return len(self.states) + len(self.transitions)


def parse_minsky(text: str) -> MinskyMachine:
    states, trans, initial, final = [], [], None, None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "states":
            states.extend(parts[1:])
        elif parts[0] == "init" and len(parts) == 2:
            initial = parts[1]
        elif parts[0] == "final" and len(parts) == 2:
            final = parts[1]
        elif parts[0] == "trans" and len(parts) == 5:
            trans.append((parts[1], parts[2], parts[3], parts[4]))
        else:
            raise ValueError(f"line {ln}: cannot parse {raw!r}")
    if initial is None or final is None:
        raise ValueError("machine needs init and final")
    return MinskyMachine(tuple(states), tuple(trans), initial, final)


def minsky_halts_within(m: MinskyMachine, budget: int) -> bool:
    """Reachability of the final state with the counter sum never
    exceeding the budget (the test oracle for the reduction)."""
    seen = set()
    frontier = [(m.initial, 0, 0)]
    while frontier:
        nxt = []
        for q, v1, v2 in frontier:
            if q == m.final:
                return True
            if (q, v1, v2) in seen:
                continue
            seen.add((q, v1, v2))
            for (p, op, cnt, p2) in m.transitions:
                if p != q:
                    continue
                c = v1 if cnt == "c1" else v2
                if op == "inc":
                    if v1 + v2 + 1 > budget:
                        continue
                    c2 = c + 1
                elif op == "dec":
                    if c == 0:
                        continue
                    c2 = c - 1
                else:
                    if c != 0:
                        continue
                    c2 = c
                nv1, nv2 = (c2, v2) if cnt == "c1" else (v1, c2)
                if (p2, nv1, nv2) not in seen:
                    nxt.append((p2, nv1, nv2))
        frontier = nxt
    return False


def build_minsky_ncs(m: MinskyMachine, alpha: Ordinal, lmax: int = None):
    """Flat-layout reduction: evaluate the Hardy value forward, simulate
    the machine against the token budget, then evaluate backwards; the
    target is the initial shape under a primed control state. Zero tests
    delete and recreate the counter node, losing tokens when the counter
    was not actually zero, which the backward phase then cannot recover.

    Returns (system, start, target).
    """
    if lmax is None:
        lmax = max([to_int(e) for e in alpha.exponents] + [1])
    fwd = build_hardy_flat(lmax)
    rules = list(fwd.rules)
    R = NcsRule

    def prime(rule: NcsRule) -> NcsRule:
        ren = {"main": "bmain"}
        return NcsRule(
            tuple(ren.get(s, "b" + s if s.startswith(("R1", "R2", "R3", "R4",
                                                      "a:")) else s)
                  for s in rule.lhs),
            tuple(ren.get(s, "b" + s if s.startswith(("R1", "R2", "R3", "R4",
                                                      "a:")) else s)
                  for s in rule.rhs))

    rules += [prime(r) for r in fwd.rules]

    # switch to simulation: create the two counter pools
    rules.append(R(("main",), ("sw1", "cnt1")))
    rules.append(R(("sw1",), (f"m:{m.initial}", "cnt2")))

    for idx, (q, op, cnt, q2) in enumerate(m.transitions):
        node = "cnt1" if cnt == "c1" else "cnt2"
        a, b = f"m:{q}", f"m:{q2}"
        t = f"t{idx}"
        if op == "inc":
            rules.append(R((a, "c", "1"), (f"mi:{t}", "c")))
            rules.append(R((f"mi:{t}", node), (b, node, "1")))
        elif op == "dec":
            rules.append(R((a, node, "1"), (f"md:{t}", node)))
            rules.append(R((f"md:{t}", "c"), (b, "c", "1")))
        else:
            rules.append(R((a, node), (f"mz:{t}",)))
            rules.append(R((f"mz:{t}",), (b, node)))

    # wrap up: drain counters back into the budget, drop the pools,
    # switch to the backward control
    fq = f"m:{m.final}"
    rules.append(R((fq, "cnt1", "1"), ("mv1", "cnt1")))
    rules.append(R(("mv1", "c"), (fq, "c", "1")))
    rules.append(R((fq, "cnt2", "1"), ("mv2", "cnt2")))
    rules.append(R(("mv2", "c"), (fq, "c", "1")))
    rules.append(R((fq, "cnt1"), ("mfin",)))
    rules.append(R(("mfin", "cnt2"), ("bmain",)))

    states = set()
    for r in rules:
        states.update(r.lhs)
        states.update(r.rhs)
    sys = Ncs(2, frozenset(states), tuple(dict.fromkeys(rules)))
    s = m.size()
    start = flat_config(alpha, s, lmax)
    target = flat_config(alpha, s, lmax, control="bmain")
    return sys, start, target
