"""Flattening tree-shaped attribute orders into a single chain.

A formula over a tree quasi-order of depth k is rewritten in three
moves to an equisatisfiable formula over the chain l1 < l2 < ... < lk.
First, every strongly connected group of attributes collapses to one
representative; guard conjuncts keep representatives of groups of
different sizes from ever sharing a data value, which is what makes the
collapse reversible.  Second, the resulting tree is padded with fresh
attributes so that every maximal chain has length exactly k, and the
root-to-leaf branches are enumerated left to right (the FramePlan).
Third, each word position over the tree is spread into a frame of n
consecutive chain positions, one per branch; position j of a frame
carries branch j's values as chain levels and the base letter tagged
with j.  Stores and checks then address chain levels instead of tree
attributes, and three structure conjuncts pin down the frame shape:
tags cycle 1..n, the base letter is constant within a frame, and
branches sharing a tree prefix carry equal level values.
"""

from dataclasses import dataclass

from .dataword import DataWord
from .formulas import (And, Check, FalseF, Finally, Formula, Freeze,
                       Globally, Letter, Next, Not, Or, Release, TrueF,
                       Until, WeakNext, branch_structure, conj, disj,
                       format_formula, freeze_normal_form, letters_of,
                       next_power)
from .order import QuasiOrder, analyze, close, collapse_sccs, downward_closure


class NotTreeOrder(ValueError):
    """Raised when some attribute has incomparable lower bounds."""


class NotInNormalForm(ValueError):
    """Raised when a store is not directly over X, WX, or a check."""


def level_attr(r: int) -> str:
    return f"l{r}"


def line_order(k: int) -> QuasiOrder:
    """The chain l1 < l2 < ... < lk."""
    attrs = [level_attr(r) for r in range(1, k + 1)]
    return close(attrs, zip(attrs, attrs[1:]))


def fuse(letter: str, j: int) -> str:
    """Base letter tagged with an in-frame index, as one alphabet symbol."""
    return f"{letter}_{j}"


def fused_alphabet(alphabet, n: int):
    return tuple(fuse(a, j) for a in sorted(alphabet)
                 for j in range(1, n + 1))


def _subst(phi: Formula, rep_of: dict) -> Formula:
    t = type(phi)
    if t in (TrueF, FalseF, Letter):
        return phi
    if t is Check:
        return Check(rep_of[phi.attr])
    if t is Freeze:
        return Freeze(rep_of[phi.attr], _subst(phi.child, rep_of))
    if t in (Not, Next, WeakNext, Globally, Finally):
        return t(_subst(phi.child, rep_of))
    if t in (And, Or, Until, Release):
        return t(_subst(phi.left, rep_of), _subst(phi.right, rep_of))
    raise TypeError(f"not a formula: {phi!r}")


def collapse_formula(phi: Formula, q: QuasiOrder):
    """Rewrite attributes to SCC representatives over the quotient order.

    Returns (formula, partial_order).  When two SCCs have different
    sizes, no single data point of the quotient domain can stand for
    points of both, so for every such pair of representatives a conjunct
    forbids the stored value of one from ever being checked at the
    other.  Orders that are already partial come back untouched.
    """
    report = analyze(q)
    if not report.is_tree:
        raise NotTreeOrder(f"incomparable lower bounds: {report.witness}")
    partial, rep_of, sizes = collapse_sccs(q)
    out = _subst(phi, rep_of)
    reps = sorted(sizes)
    # A check matches closure chains depth for depth, so only same-depth
    # representatives can ever be confused; comparable ones never can,
    # and a guard between them would even be self-contradictory (a store
    # immediately satisfies a check lower on its own chain).
    depth = {r: len(downward_closure(partial, r)) for r in reps}
    guards = [Globally(Freeze(r1, Not(Finally(Check(r2)))))
              for r1 in reps for r2 in reps
              if r1 != r2 and depth[r1] == depth[r2]
              and sizes[r1] != sizes[r2]]
    if guards:
        out = And(out, conj(guards))
    return out, partial


@dataclass
class FramePlan:
    """Branch bookkeeping for the frame encoding.

    leaves: the n branches in left-to-right order, named by their leaf.
    branch_attrs: per branch, its root-to-leaf chain (length k each).
    sb/lb: first and last branch index whose chain contains an attribute.
    lvl: depth of each attribute (size of its downward closure).
    """
    leaves: tuple
    branch_attrs: tuple
    sb: dict
    lb: dict
    lvl: dict

    @property
    def n(self) -> int:
        return len(self.leaves)

    @property
    def depth(self) -> int:
        return len(self.branch_attrs[0]) if self.branch_attrs else 0


def pad_order(p: QuasiOrder):
    """Extend every maximal chain of a tree partial order to full depth.

    Returns (padded_order, plan).  Fresh attributes _pad1, _pad2, ...
    are chained above short leaves, numbered in branch order.
    """
    report = analyze(p)
    if not report.is_tree:
        raise NotTreeOrder(f"incomparable lower bounds: {report.witness}")
    if any(len(s) > 1 for s in report.sccs):
        raise NotTreeOrder("order has non-trivial equivalence classes")
    if not p.attrs:
        raise ValueError("cannot pad an order with no attributes")
    k = report.depth
    leaves0, _, _, lvl0 = branch_structure(p)
    attrs = set(p.attrs)
    gen = [(x, y) for (x, y) in p.pairs if x != y]
    counter = 1
    for leaf in leaves0:
        below = leaf
        for _ in range(k - lvl0[leaf]):
            name = f"_pad{counter}"
            while name in attrs:
                counter += 1
                name = f"_pad{counter}"
            counter += 1
            attrs.add(name)
            gen.append((below, name))
            below = name
    padded = close(attrs, gen)
    leaves, sb, lb, lvl = branch_structure(padded)
    chains = []
    for leaf in leaves:
        chain = sorted(downward_closure(padded, leaf), key=lvl.get)
        if len(chain) != k:
            raise AssertionError(f"branch {leaf} has length {len(chain)}")
        chains.append(tuple(chain))
    plan = FramePlan(tuple(leaves), tuple(chains), sb, lb, lvl)
    return padded, plan


def pad_word(w: DataWord, padded: QuasiOrder, plan: FramePlan) -> DataWord:
    """Lift a word over a sub-order of the padded order onto all of it.

    Every padding attribute gets a fresh value at every position; fresh
    values never collide with each other or with values already in w.
    """
    old = set(w.order.attrs)
    if not old <= set(padded.attrs):
        raise ValueError("word order is not contained in the padded order")
    extra = [a for a in sorted(padded.attrs) if a not in old]
    fresh = 1 + max((v for i in range(len(w))
                     for v in w.valuation(i).values()), default=-1)
    positions = []
    for i in range(len(w)):
        d = w.valuation(i)
        for a in extra:
            d[a] = fresh
            fresh += 1
        positions.append((w.letter(i), d))
    return DataWord.make(padded, positions)


def frame_encode_word(w: DataWord, plan: FramePlan) -> DataWord:
    """Spread each position into a frame of n chain positions.

    Output position (i-1)*n + j carries w's letter tagged with j and, at
    level r, the value branch j assigns at depth r in position i.
    """
    if set(w.order.attrs) != set(plan.lvl):
        raise ValueError("word is not over the padded order")
    out_order = line_order(plan.depth)
    positions = []
    for i in range(len(w)):
        a = w.letter(i)
        d = w.valuation(i)
        for j, chain in enumerate(plan.branch_attrs, 1):
            val = {level_attr(r): d[x] for r, x in enumerate(chain, 1)}
            positions.append((fuse(a, j), val))
    return DataWord.make(out_order, positions)


def frame_translate(phi: Formula, plan: FramePlan, alphabet=None) -> Formula:
    """Translate a normal-form formula to the chain order of the plan.

    The input must be in freeze normal form (every store directly over
    X, WX, or a possibly negated check, every surviving store/check pair
    ordered by branch).  The result conjoins the translated formula with
    the three frame-structure conditions and is satisfiable over the
    fused alphabet exactly when the input is satisfiable over the tree.
    """
    n = plan.n
    if n == 0:
        raise ValueError("plan has no branches")
    sigma = set(alphabet) if alphabet is not None else set()
    sigma |= set(letters_of(phi))
    sigma = tuple(sorted(sigma)) or ("a",)

    def tag(j):
        return disj([Letter(fuse(a, j)) for a in sigma])

    def implies(a, b):
        return Or(Not(a), b)

    def wnext_power(f, m):
        for _ in range(m):
            f = WeakNext(f)
        return f

    def up(y):
        # check against the stored chain, from any in-frame offset at or
        # before the checked attribute's branch
        m, s = plan.lvl[y], plan.sb[y]
        return conj([implies(tag(j),
                             next_power(Check(level_attr(m)), s - j))
                     for j in range(1, s + 1)])

    def t(f):
        ty = type(f)
        if ty in (TrueF, FalseF):
            return f
        if ty is Letter:
            return disj([Letter(fuse(f.name, j)) for j in range(1, n + 1)])
        if ty is Check:
            return up(f.attr)
        if ty is Not:
            return Not(t(f.child))
        if ty is And:
            return And(t(f.left), t(f.right))
        if ty is Or:
            return Or(t(f.left), t(f.right))
        if ty is Next:
            return conj([implies(tag(j), next_power(t(f.child), n - j + 1))
                         for j in range(1, n + 1)])
        if ty is WeakNext:
            return conj([implies(tag(j), wnext_power(t(f.child), n - j + 1))
                         for j in range(1, n + 1)])
        if ty is Until:
            return Until(implies(tag(1), t(f.left)),
                         And(tag(1), t(f.right)))
        if ty is Release:
            return Not(Until(implies(tag(1), Not(t(f.left))),
                             And(tag(1), Not(t(f.right)))))
        if ty is Finally:
            return Finally(And(tag(1), t(f.child)))
        if ty is Globally:
            return Globally(implies(tag(1), t(f.child)))
        if ty is Freeze:
            child = f.child
            cty = type(child)
            if cty in (Next, WeakNext):
                inner = t(child)
            elif cty is Check or (cty is Not and type(child.child) is Check):
                checked = child.attr if cty is Check else child.child.attr
                if plan.sb[f.attr] > plan.sb[checked]:
                    raise NotInNormalForm(
                        f"store/check pair out of branch order: "
                        f"{format_formula(f)}")
                inner = up(checked) if cty is Check else Not(up(checked))
            else:
                raise NotInNormalForm(format_formula(f))
            store = Freeze(level_attr(plan.lvl[f.attr]), inner)
            return next_power(store, plan.sb[f.attr] - 1)
        raise TypeError(f"not a formula: {f!r}")

    # tags cycle 1..n and exclude each other
    rows = []
    for i in range(1, n + 1):
        succ = WeakNext(tag(i % n + 1))
        others = [Not(tag(j)) for j in range(1, n + 1) if j != i]
        body = And(succ, conj(others)) if others else succ
        rows.append(implies(tag(i), body))
    beta1 = And(tag(1), Globally(conj(rows)))

    # the base letter is constant within a frame (and frames are whole)
    beta2 = conj([Globally(implies(Letter(fuse(a, i)),
                                   Next(Letter(fuse(a, i + 1)))))
                  for a in sigma for i in range(1, n)])

    # branches sharing a tree attribute agree on its chain prefix
    def shared(x):
        m, s, l = plan.lvl[x], plan.sb[x], plan.lb[x]
        chk = Check(level_attr(m))
        scan = Freeze(level_attr(m), Until(chk, And(tag(l), chk)))
        return Globally(implies(tag(1), next_power(scan, s - 1)))

    beta3 = conj([shared(x) for x in sorted(plan.lvl)])

    parts = [t(phi), beta1]
    if n > 1:
        parts.append(beta2)
    parts.append(beta3)
    return conj(parts)


@dataclass
class LinearizeResult:
    """Every artifact of the end-to-end flattening pipeline."""
    collapsed: Formula
    partial: QuasiOrder
    padded: QuasiOrder
    plan: FramePlan
    normal: Formula
    translated: Formula


def linearize_formula(phi: Formula, q: QuasiOrder,
                      alphabet=None) -> LinearizeResult:
    """Collapse SCCs, pad the order, normalize stores, translate."""
    collapsed, partial = collapse_formula(phi, q)
    padded, plan = pad_order(partial)
    normal = freeze_normal_form(collapsed, padded)
    translated = frame_translate(normal, plan, alphabet=alphabet)
    return LinearizeResult(collapsed, partial, padded, plan, normal,
                           translated)
