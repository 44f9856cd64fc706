"""Satisfiability of chain-attributed freeze formulas as NCS coverability.

A closed formula over the chain l1 < ... < lk, in negation normal form
and restricted to the temporal operators X, WX, U, R, is compiled into a
nested counter system of depth k+1. A configuration abstracts one word
position: the root carries a control state, below it sit one or two
storage nodes (`stor`, and during the advancing phase `aux`) whose
depth-k cell subtrees form a forest. Each cell stands for a value
prefix, carries a mark and a set of formulas guaranteed to hold at the
first position when the register holds that prefix. The construction
phase grows guarantee sets cell by cell; the advancing phase guesses a
preceding position by copying the forest depth-first and lossily into
`aux` while prefixing every guarantee with a next-time operator. As
soon as the goal formula appears in some cell, the system may move to
the bare state `q_final`, so satisfiability over finite words becomes
coverability of `q_final`.

The generator never materialises the (exponential) rule set: successors
of a configuration are produced lazily together with the concrete rule
instance that created them, and `Reduction.schema_of` independently
re-checks any instance against the rule schemata.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import lru_cache

from .dataword import DataWord, PartialValuation
from .formulas import (And, Check, FALSE, FalseF, Finally, Formula, Freeze,
                       Globally, Letter, Next, Not, Or, Release, TRUE, TrueF,
                       Until, WeakNext, EvalContext, evaluate, format_formula,
                       is_closed, letters_of, parse)
from .linearize import level_attr, line_order
from .ncs import NcsConfig, NcsRule, bare, mk_config, _rewrite

__all__ = [
    "NotNormalized", "NotLinearOrder", "attr_level", "core_form",
    "sub_closure", "Reduction", "translate", "replay_compatibility",
]


class NotNormalized(ValueError):
    """The formula is outside the required normal form."""


class NotLinearOrder(ValueError):
    """An attribute does not name a level of the chain l1 < ... < lk."""


_LEVEL_RE = re.compile(r"^l([1-9][0-9]*)$")


def attr_level(attr: str) -> int:
    m = _LEVEL_RE.match(attr)
    if not m:
        raise NotLinearOrder(f"attribute {attr!r} is not of the form l<i>")
    return int(m.group(1))


def core_form(phi: Formula) -> Formula:
    """Negation normal form with G and F expanded into R and U."""
    def rw(f):
        t = type(f)
        if t is Globally:
            return Release(FALSE, rw(f.child))
        if t is Finally:
            return Until(TRUE, rw(f.child))
        if t in (And, Or, Until, Release):
            return t(rw(f.left), rw(f.right))
        if t in (Next, WeakNext, Not):
            return t(rw(f.child))
        if t is Freeze:
            return Freeze(f.attr, rw(f.child))
        return f
    from .formulas import nnf
    return nnf(rw(phi))


def _validate(phi: Formula, k: int | None = None) -> int:
    """Check the normal form and return the chain depth the formula needs.

    Required shape: closed, negation normal form over X/WX/U/R, attributes
    l1..lk, and every chk{li} governed by an enclosing store{lj} with
    j >= i (otherwise the check could never succeed).
    """
    if not is_closed(phi):
        raise NotNormalized(f"not closed: {format_formula(phi)}")
    top = 1

    def scan(f, reg):
        nonlocal top
        t = type(f)
        if t in (TrueF, FalseF, Letter):
            return
        if t is Check:
            lv = attr_level(f.attr)
            top = max(top, lv)
            if reg is None or lv > reg:
                raise NotNormalized(
                    f"chk{{{f.attr}}} outside a store of level >= {lv}")
            return
        if t is Not:
            if type(f.child) not in (Letter, Check):
                raise NotNormalized(
                    f"negation over {format_formula(f.child)}")
            scan(f.child, reg)
            return
        if t in (And, Or, Until, Release):
            scan(f.left, reg)
            scan(f.right, reg)
            return
        if t in (Next, WeakNext):
            scan(f.child, reg)
            return
        if t is Freeze:
            lv = attr_level(f.attr)
            top = max(top, lv)
            scan(f.child, lv)
            return
        if t in (Globally, Finally):
            raise NotNormalized(
                f"operator outside the X/WX/U/R core: {format_formula(f)}")
        raise TypeError(f"not a formula: {f!r}")

    scan(phi, None)
    if k is not None and top > k:
        raise NotLinearOrder(f"formula uses level {top} but k={k}")
    return top if k is None else k


def sub_closure(phi: Formula) -> frozenset:
    """Subformulas of phi, closed under subterms and one-step unfoldings
    of U and R (the unfoldings' own subterms included)."""
    _validate(phi)
    seen: set[Formula] = set()
    work = [phi]
    while work:
        f = work.pop()
        if f in seen:
            continue
        seen.add(f)
        t = type(f)
        if t in (And, Or, Until, Release):
            work += [f.left, f.right]
        elif t in (Next, WeakNext, Freeze, Not):
            work.append(f.child)
        if t is Until:
            work.append(Or(f.right, And(f.left, Next(f))))
        elif t is Release:
            work.append(And(f.right, Or(f.left, WeakNext(f))))
    return frozenset(seen)


# ---------------------------------------------------------------------------
# State encoding. Cell states carry a mark and a canonically rendered
# formula set; control and storage states are short tags. None of these
# are meant to round-trip through parse_config, they are only stable,
# hashable identities with a readable print form.

_STOR, _STOR_M = "stor", "stor'"
_AUX, _AUX_M = "aux", "aux'"
_SETUP, _NEXT1, _NEXT2 = "setup", "next1", "next2"
_COPY, _COPY_BT, _QFINAL = "copy", "copy_bt", "q_final"

_CELL_RE = re.compile(r"^([yn])\{(.*)\}$", re.S)


@lru_cache(maxsize=None)
def _fml_str(f: Formula) -> str:
    return format_formula(f)


@lru_cache(maxsize=None)
def _cell_state(mark: bool, fs: frozenset) -> str:
    body = ";".join(sorted(_fml_str(f) for f in fs))
    return ("y{" if mark else "n{") + body + "}"


@lru_cache(maxsize=None)
def _parse_fml(s: str) -> Formula:
    return parse(s)


@lru_cache(maxsize=None)
def _decode_cell(state: str):
    m = _CELL_RE.match(state)
    if not m:
        return None
    body = m.group(2)
    fs = frozenset(_parse_fml(p) for p in body.split(";")) if body \
        else frozenset()
    return m.group(1) == "y", fs


def _ctrl_add(a: str) -> str:
    return f"add:{a}"


def _ctrl_pending(a: str, f: Formula) -> str:
    return f"add:{a}:{_fml_str(f)}"


def _ctrl_copyf(fs: frozenset) -> str:
    return "copy:{" + ";".join(sorted(_fml_str(f) for f in fs)) + "}"


def _decode_ctrl(state: str):
    """(kind, payload): one of setup/add/pending/next1/next2/copy/copyf/
    copy_bt/final, or None for non-control states."""
    if state == _SETUP:
        return "setup", None
    if state == _NEXT1:
        return "next1", None
    if state == _NEXT2:
        return "next2", None
    if state == _COPY_BT:
        return "copy_bt", None
    if state == _QFINAL:
        return "final", None
    if state == _COPY:
        return "copy", None
    if state.startswith("copy:{") and state.endswith("}"):
        body = state[len("copy:{"):-1]
        fs = frozenset(_parse_fml(p) for p in body.split(";")) if body \
            else frozenset()
        return "copyf", fs
    if state.startswith("add:"):
        rest = state[4:]
        if ":" in rest:
            a, fml = rest.split(":", 1)
            return "pending", (a, _parse_fml(fml))
        return "add", rest
    return None, None


def _chain_config(states) -> NcsConfig:
    node = None
    for s in reversed(tuple(states)):
        node = mk_config(s, (node,) if node is not None else ())
    return node


# ---------------------------------------------------------------------------
# The reduction


@dataclass(frozen=True)
class _Paths:
    """One root-to-cell path: rewrite indices, state labels along the
    path, and the decoded (mark, formulas) chain of its cells."""
    idx: tuple
    states: tuple
    chain: tuple


def _cell_paths(c: NcsConfig, stor_states) -> list:
    """All cell paths under storage children whose state is in
    stor_states. Non-cell children of cells are ignored."""
    out = []
    for si, st in enumerate(c.children):
        if st.state not in stor_states:
            continue
        stack = [((si,), (c.state, st.state), (), st)]
        while stack:
            idx, states, chain, node = stack.pop()
            for ci, ch in enumerate(node.children):
                dec = _decode_cell(ch.state)
                if dec is None:
                    continue
                p = _Paths(idx + (ci,), states + (ch.state,), chain + (dec,))
                out.append(p)
                stack.append((p.idx, p.states, p.chain, ch))
    return out


def _storage_nodes(c: NcsConfig, states) -> list:
    return [(i, ch) for i, ch in enumerate(c.children)
            if ch.state in states]


class Reduction:
    """Compiled form of one formula: lazy successor generator, initial
    configuration and covering target."""

    def __init__(self, phi: Formula, alphabet=None, k: int | None = None):
        self.phi = core = phi
        self.k = _validate(core, k)
        letters = set(letters_of(core))
        if alphabet is not None:
            if not set(alphabet) >= letters:
                raise ValueError("alphabet misses letters of the formula")
            self.alphabet = tuple(sorted(set(alphabet)))
        else:
            self.alphabet = tuple(sorted(letters)) or ("a",)
        self.closure = sub_closure(core)

        self._wnexts = sorted((f for f in self.closure
                               if type(f) is WeakNext), key=_fml_str)
        self._letters = {f.name: f for f in self.closure
                         if type(f) is Letter}
        self._neg_letters = {f.child.name: f for f in self.closure
                             if type(f) is Not and type(f.child) is Letter}
        self._checks = {attr_level(f.attr): f for f in self.closure
                        if type(f) is Check}
        self._neg_checks = {attr_level(f.child.attr): f
                            for f in self.closure
                            if type(f) is Not and type(f.child) is Check}
        self._true = TRUE if TRUE in self.closure else None
        self._disjs = sorted((f for f in self.closure if type(f) is Or),
                             key=_fml_str)
        self._conjs = sorted((f for f in self.closure if type(f) is And),
                             key=_fml_str)
        self._folds = []
        for f in sorted(self.closure, key=_fml_str):
            if type(f) is Until:
                self._folds.append((Or(f.right, And(f.left, Next(f))), f))
            elif type(f) is Release:
                self._folds.append((And(f.right, Or(f.left, WeakNext(f))),
                                    f))
        self._freezes = {}
        for f in self.closure:
            if type(f) is Freeze:
                self._freezes.setdefault(attr_level(f.attr), []).append(f)
        for fl in self._freezes.values():
            fl.sort(key=_fml_str)

        empty = _cell_state(True, frozenset())
        self.init = mk_config(
            _SETUP, (_chain_config((_STOR,) + (empty,) * self.k),))
        self.target = bare(_QFINAL)

    # -- successor generation ----------------------------------------

    def fx(self, fs: frozenset) -> frozenset:
        return frozenset(g for g in self.closure
                         if type(g) in (Next, WeakNext) and g.child in fs)

    def successors(self, c: NcsConfig) -> list:
        """Deterministic list of (rule instance, successor) pairs."""
        out = set()

        def emit(idx, lhs, rhs):
            out.add((NcsRule(lhs, rhs), _rewrite(c, idx, rhs)))

        kind, payload = _decode_ctrl(c.state)
        if kind in (None, "final"):
            return []

        stor_cells = _cell_paths(c, (_STOR,))
        if any(self.phi in p.chain[-1][1]
               for p in _cell_paths(c, (_STOR, _STOR_M, _AUX, _AUX_M))):
            emit((), (c.state,), (_QFINAL,))

        unchecked = _cell_state(False, frozenset())
        if kind == "setup":
            for si, st in _storage_nodes(c, (_STOR,)):
                emit((si,), (c.state, _STOR),
                     (c.state, _STOR) + (unchecked,) * self.k)
            for p in stor_cells:
                mark, fs = p.chain[-1]
                if len(p.chain) < self.k:
                    emit(p.idx, p.states,
                         p.states + (unchecked,) * (self.k - len(p.chain)))
                for wn in self._wnexts:
                    if wn not in fs:
                        emit(p.idx, p.states,
                             p.states[:-1] + (_cell_state(mark,
                                                          fs | {wn}),))
            for a in self.alphabet:
                emit((), (c.state,), (_ctrl_add(a),))

        elif kind == "add":
            a = payload
            for p in stor_cells:
                mark, fs = p.chain[-1]
                d = len(p.chain)
                adds = []
                la = self._letters.get(a)
                if la is not None and la not in fs:
                    adds.append(la)
                for b, nb in self._neg_letters.items():
                    if b != a and nb not in fs:
                        adds.append(nb)
                if self._true is not None and self._true not in fs:
                    adds.append(self._true)
                # The printed positive-check schema elides the cells
                # between the checked prefix and the target; we read it
                # as: chk{l} may enter a cell at depth d >= l whenever
                # the path is checked through level l (for d == l the
                # target is the checked cell itself, which the k=1
                # instances force).
                checked_through = 0
                for m, _ in p.chain:
                    if not m:
                        break
                    checked_through += 1
                for lv in range(1, checked_through + 1):
                    ck = self._checks.get(lv)
                    if ck is not None and ck not in fs:
                        adds.append(ck)
                # Negative checks go to an unchecked cell at its exact
                # depth d, for levels d..k (the quantifier i < l' <= k
                # with the target printed at depth i+1).
                if not mark:
                    for lv in range(d, self.k + 1):
                        nc = self._neg_checks.get(lv)
                        if nc is not None and nc not in fs:
                            adds.append(nc)
                for dj in self._disjs:
                    if dj not in fs and (dj.left in fs or dj.right in fs):
                        adds.append(dj)
                for cj in self._conjs:
                    if cj not in fs and cj.left in fs and cj.right in fs:
                        adds.append(cj)
                for unfold, folded in self._folds:
                    if unfold in fs and folded not in fs:
                        adds.append(folded)
                for g in adds:
                    emit(p.idx, p.states,
                         p.states[:-1] + (_cell_state(mark, fs | {g}),))
                if mark:
                    for fz in self._freezes.get(d, ()):
                        if fz.child in fs:
                            emit(p.idx, p.states,
                                 (_ctrl_pending(a, fz),) + p.states[1:])
            emit((), (c.state,), (_NEXT1, _AUX_M))

        elif kind == "pending":
            a, fz = payload
            for p in stor_cells:
                mark, fs = p.chain[-1]
                emit(p.idx, p.states,
                     (_ctrl_add(a),) + p.states[1:-1]
                     + (_cell_state(mark, fs | {fz}),))

        elif kind == "next1":
            for p in stor_cells:
                if len(p.chain) == self.k and all(m for m, _ in p.chain):
                    rhs = ((_COPY, _STOR_M)
                           + tuple(_cell_state(False, fs)
                                   for _, fs in p.chain))
                    emit(p.idx, p.states, rhs)

        elif kind == "copy":
            for p in _cell_paths(c, (_STOR_M,)):
                if len(p.chain) == 1 and not p.chain[0][0]:
                    fs = p.chain[0][1]
                    emit(p.idx, p.states,
                         (_ctrl_copyf(fs), _STOR, _cell_state(True, fs)))
            for p in stor_cells:
                mark, fs = p.chain[-1]
                if len(p.chain) >= 2:
                    pmark, pfs = p.chain[-2]
                    if pmark and not mark:
                        emit(p.idx, p.states,
                             (_ctrl_copyf(fs),) + p.states[1:-2]
                             + (_cell_state(False, pfs),
                                _cell_state(True, fs)))
                    if not pmark and mark:
                        emit(p.idx, p.states,
                             (_COPY_BT,) + p.states[1:-2]
                             + (_cell_state(True, pfs),))
                elif mark:
                    emit(p.idx, p.states, (_COPY_BT, _STOR_M))
            for si, st in _storage_nodes(c, (_STOR_M,)):
                emit((si,), (c.state, _STOR_M), (_COPY_BT,))

        elif kind == "copyf":
            fx = self.fx(payload)
            for si, st in _storage_nodes(c, (_AUX_M,)):
                emit((si,), (c.state, _AUX_M),
                     (_COPY, _AUX, _cell_state(True, fx)))
            for p in _cell_paths(c, (_AUX,)):
                mark, fs = p.chain[-1]
                if mark and len(p.chain) < self.k:
                    emit(p.idx, p.states,
                         (_COPY,) + p.states[1:-1]
                         + (_cell_state(False, fs), _cell_state(True, fx)))

        elif kind == "copy_bt":
            for p in _cell_paths(c, (_AUX,)):
                mark, fs = p.chain[-1]
                if not mark:
                    continue
                if len(p.chain) >= 2:
                    pmark, pfs = p.chain[-2]
                    if not pmark:
                        emit(p.idx, p.states,
                             (_COPY,) + p.states[1:-2]
                             + (_cell_state(True, pfs),
                                _cell_state(False, fs)))
                else:
                    emit(p.idx, p.states,
                         (_COPY, _AUX_M, _cell_state(False, fs)))
            for si, st in _storage_nodes(c, (_AUX_M,)):
                emit((si,), (c.state, _AUX_M), (_NEXT2, _STOR))

        elif kind == "next2":
            checked_empty = _cell_state(True, frozenset())
            for si, st in _storage_nodes(c, (_STOR,)):
                for a in self.alphabet:
                    emit((si,), (c.state, _STOR),
                         (_ctrl_add(a), _STOR) + (checked_empty,) * self.k)
            for p in stor_cells:
                if any(m for m, _ in p.chain):
                    continue
                d = len(p.chain)
                checked = tuple(_cell_state(True, fs) for _, fs in p.chain)
                for a in self.alphabet:
                    emit(p.idx, p.states,
                         (_ctrl_add(a), _STOR) + checked
                         + (checked_empty,) * (self.k - d))

        return sorted(out, key=lambda t: (t[0].lhs, t[0].rhs, t[1]))

    def gen(self, c: NcsConfig) -> list:
        return self.successors(c)

    # -- schema membership ---------------------------------------------

    def schema_of(self, rule: NcsRule) -> str | None:
        """Classify a concrete rule instance against the schemata, side
        conditions included; None when it fits none of them."""
        lhs, rhs = rule.lhs, rule.rhs
        if rhs == (_QFINAL,) and len(lhs) == 1:
            return "finish"
        lk, lp = _decode_ctrl(lhs[0])
        rk, rp = _decode_ctrl(rhs[0])
        if lk is None or rk is None:
            return None
        lcells = [_decode_cell(s) for s in lhs[2:]]
        rcells = [_decode_cell(s) for s in rhs[2:]]
        if any(x is None for x in lcells) or any(x is None for x in rcells):
            return None
        lstor = lhs[1] if len(lhs) > 1 else None
        rstor = rhs[1] if len(rhs) > 1 else None

        def formula_added(expect_types=None):
            # identical chains except the last lhs cell gains exactly one
            # closure formula, mark preserved
            if len(rcells) != len(lcells) or not lcells:
                return None
            if lcells[:-1] != rcells[:-1]:
                return None
            (m1, f1), (m2, f2) = lcells[-1], rcells[-1]
            if m1 != m2 or not f2 > f1 or len(f2 - f1) != 1:
                return None
            (g,) = f2 - f1
            if g not in self.closure:
                return None
            if expect_types and type(g) not in expect_types:
                return None
            return g

        if lk == "setup" and rk == "setup" and lstor == rstor == _STOR:
            if (len(lcells) < len(rcells) == self.k
                    and rcells[:len(lcells)] == lcells
                    and all(cell == (False, frozenset())
                            for cell in rcells[len(lcells):])):
                return "grow_branch"
            g = formula_added((WeakNext,))
            if g is not None:
                return "seed_weaknext"
            return None
        if lk == "setup" and rk == "add" and len(lhs) == len(rhs) == 1:
            return "guess_letter" if rp in self.alphabet else None

        if lk == "add" and rk == "next1":
            if lhs == (_ctrl_add(lp),) and rhs == (_NEXT1, _AUX_M):
                return "advance_in"
            return None
        if lk == "add" and rk == "add" and lp == rp \
                and lstor == rstor == _STOR:
            g = formula_added()
            if g is None:
                return None
            marks = [m for m, _ in lcells]
            d = len(lcells)
            t = type(g)
            if t is Letter:
                return "add_letter" if g.name == lp else None
            if t is TrueF:
                return "add_true"
            if t is Not and type(g.child) is Letter:
                return ("add_negated_letter"
                        if g.child.name != lp
                        and g.child.name in self.alphabet else None)
            if t is Check:
                lv = attr_level(g.attr)
                return ("add_check"
                        if lv <= d and all(marks[:lv]) else None)
            if t is Not and type(g.child) is Check:
                lv = attr_level(g.child.attr)
                return ("add_negated_check"
                        if not marks[-1] and d <= lv <= self.k else None)
            fs = lcells[-1][1]
            if t is Or:
                return ("add_disjunction"
                        if g.left in fs or g.right in fs else None)
            if t is And:
                return ("add_conjunction"
                        if g.left in fs and g.right in fs else None)
            if t is Until:
                return ("fold_until"
                        if Or(g.right, And(g.left, Next(g))) in fs else None)
            if t is Release:
                return ("fold_release"
                        if And(g.right, Or(g.left, WeakNext(g))) in fs
                        else None)
            return None
        if lk == "add" and rk == "pending":
            a, fz = rp
            if a != lp or lhs[1:] != rhs[1:] or lstor != _STOR:
                return None
            if type(fz) is not Freeze or fz not in self.closure:
                return None
            if not lcells or attr_level(fz.attr) != len(lcells):
                return None
            mark, fs = lcells[-1]
            return "collect_freeze" if mark and fz.child in fs else None
        if lk == "pending" and rk == "add":
            a, fz = lp
            if a != rp or lstor != rstor or lstor != _STOR:
                return None
            if len(lcells) != len(rcells) or not lcells \
                    or lcells[:-1] != rcells[:-1]:
                return None
            (m1, f1), (m2, f2) = lcells[-1], rcells[-1]
            return ("deposit_freeze"
                    if m1 == m2 and f2 == f1 | {fz} else None)

        if lk == "next1" and rk == "copy":
            if lstor != _STOR or rstor != _STOR_M:
                return None
            if len(lcells) != self.k or len(rcells) != self.k:
                return None
            if all(m for m, _ in lcells) and not any(m for m, _ in rcells) \
                    and [f for _, f in lcells] == [f for _, f in rcells]:
                return "point_storage"
            return None
        if lk == "copy" and rk == "copyf":
            if lstor == _STOR_M and rstor == _STOR and len(lcells) == 1 \
                    and len(rcells) == 1:
                (m1, f1), (m2, f2) = lcells[0], rcells[0]
                return ("pick_root_cell"
                        if not m1 and m2 and f1 == f2 == rp else None)
            if lstor == rstor == _STOR and len(lcells) >= 2 \
                    and len(lcells) == len(rcells) \
                    and lcells[:-2] == rcells[:-2]:
                (pm1, pf1), (cm1, cf1) = lcells[-2], lcells[-1]
                (pm2, pf2), (cm2, cf2) = rcells[-2], rcells[-1]
                if pm1 and not cm1 and not pm2 and cm2 \
                        and pf1 == pf2 and cf1 == cf2 == rp:
                    return "pick_child_cell"
            return None
        if lk == "copyf" and rk == "copy":
            if lstor == _AUX_M and rstor == _AUX and not lcells \
                    and len(rcells) == 1:
                m, f = rcells[0]
                return ("put_root_cell"
                        if m and f == self.fx(lp) else None)
            if lstor == rstor == _AUX and len(rcells) == len(lcells) + 1 \
                    and lcells[:-1] == rcells[:-2]:
                (m1, f1) = lcells[-1]
                (m2, f2), (m3, f3) = rcells[-2], rcells[-1]
                if m1 and not m2 and m3 and f1 == f2 \
                        and f3 == self.fx(lp) and len(rcells) <= self.k:
                    return "put_child_cell"
            return None
        if lk == "copy" and rk == "copy_bt":
            if lstor == _STOR and rstor == _STOR \
                    and len(lcells) >= 2 and len(rcells) == len(lcells) - 1 \
                    and lcells[:-2] == rcells[:-1]:
                (pm, pf), (cm, cf) = lcells[-2], lcells[-1]
                m2, f2 = rcells[-1]
                if not pm and cm and m2 and pf == f2:
                    return "drop_copied_cell"
            if lstor == _STOR and rstor == _STOR_M and len(lcells) == 1 \
                    and not rcells and lcells[0][0]:
                return "drop_copied_root"
            if lstor == _STOR_M and len(lhs) == 2 and rhs == (_COPY_BT,):
                return "drop_storage"
            return None
        if lk == "copy_bt" and rk == "copy":
            if lstor == rstor == _AUX and len(lcells) >= 2 \
                    and len(lcells) == len(rcells) \
                    and lcells[:-2] == rcells[:-2]:
                (pm1, pf1), (cm1, cf1) = lcells[-2], lcells[-1]
                (pm2, pf2), (cm2, cf2) = rcells[-2], rcells[-1]
                if not pm1 and cm1 and pm2 and not cm2 \
                        and pf1 == pf2 and cf1 == cf2:
                    return "retreat_in_copy"
            if lstor == _AUX and rstor == _AUX_M and len(lcells) == 1 \
                    and len(rcells) == 1:
                (m1, f1), (m2, f2) = lcells[0], rcells[0]
                if m1 and not m2 and f1 == f2:
                    return "park_copy"
            return None
        if lk == "copy_bt" and rk == "next2":
            if lhs == (_COPY_BT, _AUX_M) and rhs == (_NEXT2, _STOR):
                return "promote_copy"
            return None
        if lk == "next2" and rk == "add":
            if lstor != _STOR or rstor != _STOR or rp not in self.alphabet:
                return None
            if len(rcells) != self.k or len(lcells) > self.k:
                return None
            if any(m for m, _ in lcells):
                return None
            if [f for _, f in rcells[:len(lcells)]] \
                    != [f for _, f in lcells]:
                return None
            if not all(m for m, _ in rcells):
                return None
            if any(f for _, f in rcells[len(lcells):]):
                return None
            return "reenter"
        return None


def translate(phi: Formula, alphabet=None, k: int | None = None):
    """Compile phi into (successor generator, initial configuration,
    covering target). The generator yields (rule instance, successor)
    pairs as cover() expects."""
    red = Reduction(phi, alphabet, k)
    return red.gen, red.init, red.target


# ---------------------------------------------------------------------------
# Compatibility replay. Walks a run label by label while maintaining a
# data word and a value for every forest node such that, at every step,
# all cell guarantees hold on the word at position one under the register
# holding the cell's value prefix, the control letter matches the first
# position, and outside the copying phases the checked branch carries
# exactly the first position's values.


class _Node:
    __slots__ = ("mark", "fs", "val", "kids")

    def __init__(self, mark, fs, val, kids=None):
        self.mark = mark
        self.fs = fs
        self.val = val
        self.kids = kids if kids is not None else []

    def clone(self):
        return _Node(self.mark, self.fs, self.val,
                     [k.clone() for k in self.kids])


class _Shadow:
    """Mutable annotated configuration: control state, named storage
    nodes with value-carrying cell trees, and the word built so far."""

    def __init__(self, red: Reduction):
        self.red = red
        self.ctrl = _SETUP
        self._fresh = itertools.count(1)
        branch = None
        vals = []
        for _ in range(red.k):
            vals.append(next(self._fresh))
        for v in reversed(vals):
            branch = _Node(True, frozenset(), v,
                           [branch] if branch else [])
        self.storages: list[list] = [[_STOR, [branch]]]
        self.word = [(red.alphabet[0], tuple(vals))]

    def clone(self):
        s = object.__new__(_Shadow)
        s.red = self.red
        s.ctrl = self.ctrl
        s._fresh = self._fresh
        s._picked = getattr(self, "_picked", None)
        s.storages = [[name, [n.clone() for n in kids]]
                      for name, kids in self.storages]
        s.word = list(self.word)
        return s

    def erase(self) -> NcsConfig:
        def enc(n):
            return mk_config(_cell_state(n.mark, n.fs),
                             [enc(k) for k in n.kids])
        return mk_config(self.ctrl,
                         [mk_config(name, [enc(n) for n in kids])
                          for name, kids in self.storages])

    def storage(self, names):
        for entry in self.storages:
            if entry[0] in names:
                return entry
        return None

    def _paths(self, names):
        entry = self.storage(names)
        if entry is None:
            return []
        out = []
        stack = [((), n) for n in entry[1]]
        while stack:
            prefix, node = stack.pop()
            path = prefix + (node,)
            out.append(path)
            for k in node.kids:
                stack.append((path, k))
        return out

    # -- the word and compatibility ------------------------------------

    def data_word(self) -> DataWord:
        order = line_order(self.red.k)
        return DataWord.make(order, [
            (a, {level_attr(i + 1): v for i, v in enumerate(vals)})
            for a, vals in self.word])

    def check_compatible(self):
        red = self.red
        w = self.data_word()
        order = w.order
        entry = self.storage((_STOR, _STOR_M)) or \
            self.storage((_AUX_M, _AUX))
        kind, payload = _decode_ctrl(self.ctrl)
        if entry is not None:
            stack = [((), n) for n in entry[1]]
            while stack:
                prefix, node = stack.pop()
                vals = prefix + (node,)
                reg = PartialValuation.make(
                    level_attr(len(vals)),
                    {level_attr(i + 1): n.val for i, n in enumerate(vals)})
                for g in node.fs:
                    if not evaluate(EvalContext(w, 1, reg), g):
                        raise AssertionError(
                            f"guarantee fails: {format_formula(g)} with "
                            f"register {reg.as_dict()} on {w.positions}")
                for k in node.kids:
                    stack.append((vals, k))
        if kind in ("add", "pending"):
            a = payload if kind == "add" else payload[0]
            if a != self.word[0][0]:
                raise AssertionError(
                    f"control letter {a} != first letter {self.word[0][0]}")
        if kind not in ("next1", "next2", "copy", "copyf", "copy_bt",
                        "final"):
            checked = [p for p in self._paths((_STOR, _STOR_M))
                       if len(p) == red.k and all(n.mark for n in p)]
            if len(checked) != 1:
                raise AssertionError(
                    f"{len(checked)} checked branches in state {self.ctrl}")
            vals = tuple(n.val for n in checked[0])
            if vals != self.word[0][1]:
                raise AssertionError(
                    f"checked branch {vals} != first valuation "
                    f"{self.word[0][1]}")

    # -- applying one classified rule ----------------------------------

    def matches(self, rule: NcsRule):
        """All (storage entry, node path) pairs whose states spell the
        rule's lhs below this control state."""
        lhs = rule.lhs
        if lhs[0] != self.ctrl:
            return []
        if len(lhs) == 1:
            return [(None, ())]
        out = []
        for entry in self.storages:
            if entry[0] != lhs[1]:
                continue
            if len(lhs) == 2:
                out.append((entry, ()))
                continue

            def walk(nodes, depth, acc):
                for n in nodes:
                    if _cell_state(n.mark, n.fs) != lhs[2 + depth]:
                        continue
                    path = acc + (n,)
                    if 3 + depth == len(lhs):
                        out.append((entry, path))
                    else:
                        walk(n.kids, depth + 1, path)
            walk(entry[1], 0, ())
        return out

    def apply(self, schema: str, rule: NcsRule, entry, path):
        red = self.red
        lhs, rhs = rule.lhs, rule.rhs
        if schema == "finish":
            self.ctrl = _QFINAL
            return
        if schema == "guess_letter":
            a = _decode_ctrl(rhs[0])[1]
            self.word[0] = (a, self.word[0][1])
            self.ctrl = rhs[0]
            return
        if schema == "advance_in":
            self.storages.append([_AUX_M, []])
            self.ctrl = rhs[0]
            return
        if schema == "grow_branch":
            chain = None
            for _ in range(len(rhs) - len(lhs)):
                chain = _Node(False, frozenset(), next(self._fresh),
                              [chain] if chain else [])
            holder = path[-1].kids if path else entry[1]
            holder.append(chain)
            return
        if schema in ("seed_weaknext", "add_letter", "add_negated_letter",
                      "add_true", "add_check", "add_negated_check",
                      "add_disjunction", "add_conjunction", "fold_until",
                      "fold_release", "deposit_freeze"):
            old = _decode_cell(lhs[-1])[1]
            new = _decode_cell(rhs[-1])[1]
            (g,) = new - old
            path[-1].fs = path[-1].fs | {g}
            self.ctrl = rhs[0]
            return
        if schema == "collect_freeze":
            self.ctrl = rhs[0]
            return
        if schema == "point_storage":
            for n in path:
                n.mark = False
            entry[0] = _STOR_M
            self.ctrl = rhs[0]
            return
        if schema in ("pick_root_cell", "pick_child_cell"):
            if schema == "pick_child_cell":
                path[-2].mark = False
            else:
                entry[0] = _STOR
            path[-1].mark = True
            self._picked = path[-1].val
            self.ctrl = rhs[0]
            return
        if schema in ("put_root_cell", "put_child_cell"):
            fxs = self.red.fx(_decode_ctrl(lhs[0])[1])
            cell = _Node(True, fxs, self._picked)
            if schema == "put_child_cell":
                path[-1].mark = False
                path[-1].kids.append(cell)
            else:
                entry[0] = _AUX
                entry[1].append(cell)
            self.ctrl = rhs[0]
            return
        if schema == "drop_copied_cell":
            path[-2].kids.remove(path[-1])
            path[-2].mark = True
            self.ctrl = rhs[0]
            return
        if schema == "drop_copied_root":
            entry[1].remove(path[-1])
            entry[0] = _STOR_M
            self.ctrl = rhs[0]
            return
        if schema == "drop_storage":
            self.storages = [e for e in self.storages if e is not entry]
            # the forest of record switches to the copy; the word grows a
            # provisional first position whose letter and values are fixed
            # at re-entry
            self.word.insert(0, (red.alphabet[0],
                                 tuple(next(self._fresh)
                                       for _ in range(red.k))))
            self.ctrl = rhs[0]
            return
        if schema == "retreat_in_copy":
            path[-1].mark = False
            path[-2].mark = True
            self.ctrl = rhs[0]
            return
        if schema == "park_copy":
            path[-1].mark = False
            entry[0] = _AUX_M
            self.ctrl = rhs[0]
            return
        if schema == "promote_copy":
            entry[0] = _STOR
            self.ctrl = rhs[0]
            return
        if schema == "reenter":
            for n in path:
                n.mark = True
            n_new = len(rhs) - len(lhs)
            chain = None
            tail_vals = [next(self._fresh) for _ in range(n_new)]
            for v in reversed(tail_vals):
                chain = _Node(True, frozenset(), v,
                              [chain] if chain else [])
            if chain is not None:
                holder = path[-1].kids if path else entry[1]
                holder.append(chain)
            vals = tuple(n.val for n in path) + tuple(tail_vals)
            a = _decode_ctrl(rhs[0])[1]
            self.word[0] = (a, vals)
            self.ctrl = rhs[0]
            return
        raise AssertionError(f"no replay action for schema {schema}")


def replay_compatibility(red: Reduction, run) -> DataWord:
    """Replay a cover() run, maintaining a data word and per-node values
    witnessing compatibility after every step; returns the final word.

    run is a list of (rule instance, configuration) pairs as found in
    Covered.run.
    """
    shadow = _Shadow(red)
    if shadow.erase() != red.init:
        raise AssertionError("shadow does not start at the initial config")
    shadow.check_compatible()
    for rule, expect in run:
        schema = red.schema_of(rule)
        if schema is None:
            raise AssertionError(f"rule fits no schema: {rule!r}")
        applied = None
        for entry, path in shadow.matches(rule):
            trial = shadow.clone()
            t_entry = None
            if entry is not None:
                pos = next(i for i, e in enumerate(shadow.storages)
                           if e is entry)
                t_entry = trial.storages[pos]
                t_path = ()
                if path:
                    # find the same positions in the clone
                    def locate(orig_nodes, clone_nodes, target):
                        for o, cn in zip(orig_nodes, clone_nodes):
                            if o is target[0]:
                                if len(target) == 1:
                                    return (cn,)
                                rest = locate(o.kids, cn.kids, target[1:])
                                if rest is not None:
                                    return (cn,) + rest
                        return None
                    t_path = locate(entry[1], t_entry[1], path)
            else:
                t_path = ()
            trial.apply(schema, rule, t_entry, t_path)
            if trial.erase() == expect:
                applied = trial
                break
        if applied is None:
            raise AssertionError(
                f"no match reproduces the step {rule!r} -> {expect!r}")
        shadow = applied
        shadow.check_compatible()
    return shadow.data_word()
