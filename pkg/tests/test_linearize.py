import pytest

from ltlqo.dataword import DataWord
from ltlqo.formulas import (And, Check, FalseF, Finally, Formula, Freeze,
                            Globally, Letter, LimitExhausted, Next,
                            NoWitnessUpTo, Not, Or, Release, SearchLimits,
                            TrueF, Until, WeakNext, Witness, bounded_sat,
                            models, parse)
from ltlqo.linearize import (NotInNormalForm, NotTreeOrder, collapse_formula,
                             frame_encode_word, frame_translate, fuse,
                             fused_alphabet, level_attr, line_order,
                             linearize_formula, pad_order, pad_word)
from ltlqo.order import close


# depth 3, two branches of different length
EX2 = close({"x1", "x2", "x3", "y1", "y2"},
            [("x1", "x2"), ("x2", "x3"), ("y1", "y2")])
# depth 2, one shared root
FORK = close({"r", "y", "z"}, [("r", "y"), ("r", "z")])

LIM = SearchLimits(max_nodes=150_000)


def formula_nodes(f: Formula) -> int:
    t = type(f)
    if t in (TrueF, FalseF, Letter, Check):
        return 1
    if t in (Not, Next, WeakNext, Globally, Finally, Freeze):
        return 1 + formula_nodes(f.child)
    return 1 + formula_nodes(f.left) + formula_nodes(f.right)


def translation_core(translated: Formula, n: int) -> Formula:
    # frame_translate conjoins [core, beta1, beta3] for one branch and
    # [core, beta1, beta2, beta3] otherwise, left-associated
    out = translated.left.left
    return out.left if n > 1 else out


# ---------------------------------------------------------------------------
# SCC collapse


def test_collapse_partial_order_is_identity():
    phi = parse("store{x2} X chk{y2}")
    out, partial = collapse_formula(phi, EX2)
    assert out == phi
    assert partial == EX2


def test_collapse_guard_for_one_mixed_size_pair():
    q = close({"a", "b", "c"}, [("a", "b"), ("b", "a")])
    phi = parse("store{c} X chk{c}")
    out, partial = collapse_formula(phi, q)
    assert partial.attrs == {"a", "c"}
    assert type(out) is And and out.left == phi
    guards = []
    f = out.right
    while type(f) is And:
        guards.append(f.right)
        f = f.left
    guards.append(f)
    pairs = set()
    for g in guards:
        assert type(g) is Globally and type(g.child) is Freeze
        inner = g.child
        assert inner.child == Not(Finally(Check(inner.child.child.child.attr)))
        pairs.add((inner.attr, inner.child.child.child.attr))
    assert pairs == {("a", "c"), ("c", "a")}


def test_collapse_rewrites_both_members_to_representative():
    q = close({"a", "b"}, [("a", "b"), ("b", "a")])
    out, partial = collapse_formula(parse("store{b} F chk{a}"), q)
    assert out == parse("store{a} F chk{a}")
    assert partial.attrs == {"a"}


def test_collapse_comparable_representatives_get_no_guard():
    # sizes differ (2 vs 1) but the representatives sit at different
    # depths of one chain, where a check can never confuse them; a guard
    # here would contradict itself at the storing position
    q = close({"r", "s", "t"}, [("r", "s"), ("s", "r"), ("r", "t")])
    phi = parse("store{t} X chk{t}")
    out, partial = collapse_formula(phi, q)
    assert out == phi
    assert partial.attrs == {"r", "t"}


def test_collapse_rejects_incomparable_lower_bounds():
    q = close({"x", "y", "z"}, [("x", "z"), ("y", "z")])
    with pytest.raises(NotTreeOrder):
        collapse_formula(parse("store{z} X chk{z}"), q)


# ---------------------------------------------------------------------------
# Padding


def test_pad_short_branch_gains_one_attribute():
    padded, plan = pad_order(EX2)
    assert padded.attrs == EX2.attrs | {"_pad1"}
    assert plan.leaves == ("x3", "_pad1")
    assert plan.branch_attrs == (("x1", "x2", "x3"), ("y1", "y2", "_pad1"))
    assert plan.n == 2 and plan.depth == 3
    assert (plan.sb["x1"], plan.lb["x1"]) == (1, 1)
    assert (plan.sb["y2"], plan.lb["y2"]) == (2, 2)
    assert plan.lvl["_pad1"] == 3


def test_pad_full_chain_unchanged():
    p = close({"r", "t"}, [("r", "t")])
    padded, plan = pad_order(p)
    assert padded == p
    assert plan.n == 1
    assert plan.branch_attrs == (("r", "t"),)


def test_pad_two_singletons_unchanged():
    p = close({"u", "v"}, [])
    padded, plan = pad_order(p)
    assert padded == p
    assert plan.n == 2 and plan.depth == 1
    assert plan.leaves == ("u", "v")


def test_pad_rejects_non_tree_and_equivalences():
    with pytest.raises(NotTreeOrder):
        pad_order(close({"x", "y", "z"}, [("x", "z"), ("y", "z")]))
    with pytest.raises(NotTreeOrder):
        pad_order(close({"a", "b"}, [("a", "b"), ("b", "a")]))


def test_pad_shared_root_keeps_both_branches():
    padded, plan = pad_order(FORK)
    assert padded == FORK
    assert plan.branch_attrs == (("r", "y"), ("r", "z"))
    assert (plan.sb["r"], plan.lb["r"]) == (1, 2)


# ---------------------------------------------------------------------------
# Frame encoding of words


def test_frame_encode_disjoint_roots_separate_values():
    padded, plan = pad_order(EX2)
    w = DataWord.make(padded, [("a", {"x1": 1, "x2": 2, "x3": 3,
                                      "y1": 4, "y2": 5, "_pad1": 6})])
    u = frame_encode_word(w, plan)
    assert len(u) == 2
    assert u.letter(0) == "a_1" and u.letter(1) == "a_2"
    assert u.valuation(0) == {"l1": 1, "l2": 2, "l3": 3}
    assert u.valuation(1) == {"l1": 4, "l2": 5, "l3": 6}
    assert u.valuation(0)["l1"] != u.valuation(1)["l1"]


def test_frame_encode_shared_root_shares_level_one():
    padded, plan = pad_order(FORK)
    w = DataWord.make(padded, [("a", {"r": 7, "y": 1, "z": 2})])
    u = frame_encode_word(w, plan)
    assert u.valuation(0)["l1"] == u.valuation(1)["l1"] == 7
    assert u.valuation(0)["l2"] == 1 and u.valuation(1)["l2"] == 2


def test_frame_encode_single_branch_copies_positionwise():
    p = close({"x"}, [])
    padded, plan = pad_order(p)
    w = DataWord.make(padded, [("a", {"x": 5}), ("b", {"x": 7})])
    u = frame_encode_word(w, plan)
    assert [u.letter(i) for i in range(2)] == ["a_1", "b_1"]
    assert [u.valuation(i) for i in range(2)] == [{"l1": 5}, {"l1": 7}]


def test_frame_encode_two_positions_two_branches_tags_cycle():
    padded, plan = pad_order(FORK)
    w = DataWord.make(padded, [("a", {"r": 0, "y": 1, "z": 2}),
                               ("b", {"r": 3, "y": 4, "z": 5})])
    u = frame_encode_word(w, plan)
    assert [u.letter(i) for i in range(4)] == ["a_1", "a_2", "b_1", "b_2"]
    assert u.valuation(2) == {"l1": 3, "l2": 4}


def test_pad_word_gives_padding_fresh_values():
    padded, plan = pad_order(EX2)
    w = DataWord.make(EX2, [("a", {"x1": 0, "x2": 0, "x3": 0,
                                   "y1": 0, "y2": 0}),
                            ("a", {"x1": 0, "x2": 1, "x3": 1,
                                   "y1": 0, "y2": 0})])
    wp = pad_word(w, padded, plan)
    v0, v1 = wp.valuation(0)["_pad1"], wp.valuation(1)["_pad1"]
    assert v0 != v1
    assert v0 > 1 and v1 > 1
    assert wp.valuation(1)["x2"] == 1


# ---------------------------------------------------------------------------
# Frame translation


def test_translate_letter_becomes_tagged_letter():
    _, plan = pad_order(close({"x"}, []))
    out = frame_translate(parse("a"), plan, alphabet=["a"])
    assert translation_core(out, 1) == Letter("a_1")


def test_translate_letter_two_branches_is_tag_disjunction():
    _, plan = pad_order(FORK)
    out = frame_translate(parse("a"), plan, alphabet=["a"])
    assert translation_core(out, 2) == Or(Letter("a_1"), Letter("a_2"))


def test_translate_commutes_with_negation():
    _, plan = pad_order(FORK)
    pos = frame_translate(parse("a"), plan, alphabet=["a", "b"])
    neg = frame_translate(parse("!a"), plan, alphabet=["a", "b"])
    assert translation_core(neg, 2) == Not(translation_core(pos, 2))


def test_translate_rejects_store_over_temporal_operator():
    _, plan = pad_order(FORK)
    with pytest.raises(NotInNormalForm):
        frame_translate(Freeze("y", Finally(Check("y"))), plan)
    with pytest.raises(NotInNormalForm):
        frame_translate(Freeze("y", And(TrueF(), Check("y"))), plan)


def test_translate_rejects_misordered_store_check_pair():
    _, plan = pad_order(FORK)
    with pytest.raises(NotInNormalForm):
        frame_translate(Freeze("z", Check("y")), plan)


def test_full_pipeline_single_attribute_equisatisfiable():
    q = close({"x"}, [])
    phi = parse("store{x} X chk{x}")
    res = linearize_formula(phi, q, alphabet=["a"])
    r1 = bounded_sat(phi, ["a"], q, 4, LIM)
    r2 = bounded_sat(res.translated, fused_alphabet(["a"], 1),
                     line_order(1), 4, LIM)
    assert isinstance(r1, Witness) and isinstance(r2, Witness)
    wp = pad_word(r1.word, res.padded, res.plan)
    assert models(frame_encode_word(wp, res.plan), res.translated)


# ---------------------------------------------------------------------------
# Equisatisfiability corpus: formulas over orders of depth up to three,
# checked against the translated side at matching bounds.

O_ONE = close({"x"}, [])
O_PAIR = close({"u", "v"}, [])
O_CHAIN = close({"r", "t"}, [("r", "t")])
O_SCC = close({"a", "b", "c"}, [("a", "b"), ("b", "a")])
O_SCC2 = close({"a", "b", "c", "d"},
               [("a", "b"), ("b", "a"), ("c", "d"), ("d", "c")])
O_SCCCHAIN = close({"r", "s", "t"}, [("r", "s"), ("s", "r"), ("r", "t")])

CORPUS = [
    # (order, formula, alphabet, length bound)
    (O_ONE, "store{x} X chk{x}", ("a",), 4),
    (O_ONE, "store{x} X !chk{x}", ("a",), 4),
    (O_ONE, "store{x} X (chk{x} & !chk{x})", ("a",), 4),
    (O_ONE, "G (store{x} X chk{x})", ("a",), 3),
    (O_ONE, "store{x} WX chk{x}", ("a",), 3),
    (O_ONE, "store{x} (a R chk{x})", ("a", "b"), 3),
    (O_ONE, "a & !a", ("a", "b"), 3),
    (O_ONE, "a & X (b & store{x} chk{x})", ("a", "b"), 3),
    (O_ONE, "F (store{x} X chk{x}) & G a", ("a", "b"), 3),
    (O_ONE, "store{x} G !chk{x}", ("a",), 3),
    (O_ONE, "store{x} X (a U chk{x})", ("a", "b"), 3),
    (O_PAIR, "store{u} X chk{v}", ("a",), 3),
    (O_PAIR, "store{u} G !chk{v}", ("a",), 2),
    (O_PAIR, "store{u} (chk{v} & !chk{v})", ("a",), 3),
    (O_PAIR, "a & store{u} X (b & chk{v})", ("a", "b"), 2),
    (O_PAIR, "G a & F b", ("a", "b"), 3),
    (O_CHAIN, "store{t} X chk{t}", ("a",), 3),
    (O_CHAIN, "store{t} X chk{r}", ("a",), 3),
    (O_CHAIN, "store{r} X chk{t}", ("a",), 3),
    (O_CHAIN, "store{t} X !chk{r}", ("a",), 3),
    (FORK, "store{y} X chk{z}", ("a",), 2),
    (FORK, "store{y} X (chk{z} & !chk{z})", ("a",), 2),
    (FORK, "G (store{y} X chk{y})", ("a",), 2),
    (FORK, "store{y} WX chk{z}", ("a",), 2),
    (FORK, "store{y} chk{z}", ("a",), 2),
    (FORK, "!(store{y} chk{z}) & a", ("a",), 2),
    (FORK, "G (store{r} WX chk{r})", ("a",), 2),
    (O_SCC, "store{a} X chk{a}", ("a",), 3),
    (O_SCC, "store{c} F chk{a}", ("a",), 3),
    (O_SCC, "store{a} F chk{c}", ("a",), 3),
    (O_SCC2, "store{a} F chk{c}", ("a",), 3),
    (O_SCC2, "store{a} X (chk{c} & !chk{c})", ("a",), 2),
    (O_SCCCHAIN, "store{t} X chk{t}", ("a",), 3),
    (O_SCCCHAIN, "store{t} F chk{r}", ("a",), 3),
    (O_SCCCHAIN, "store{r} X chk{t}", ("a",), 3),
    (EX2, "store{x2} X chk{y2}", ("a",), 1),
    (EX2, "store{x2} WX chk{y2}", ("a",), 1),
    (EX2, "store{x3} F chk{x3} & a", ("a",), 2),
    (EX2, "store{y2} chk{x2}", ("a",), 1),
]


def corpus_verdicts(order, text, alphabet, max_len, limits=LIM):
    """Run both sides of one corpus entry.

    Returns (orig_result, translated_result, pipeline) with bounds L and
    n*L respectively."""
    phi = parse(text)
    res = linearize_formula(phi, order, alphabet=alphabet)
    r1 = bounded_sat(phi, alphabet, order, max_len, limits)
    r2 = bounded_sat(res.translated, fused_alphabet(alphabet, res.plan.n),
                     line_order(res.plan.depth), res.plan.n * max_len,
                     limits)
    return r1, r2, res


def is_scc_free(order) -> bool:
    return all((x, y) == (y, x) or not ((x, y) in order.pairs
                                        and (y, x) in order.pairs)
               for x in order.attrs for y in order.attrs)


def test_corpus_is_large_enough():
    assert len(CORPUS) >= 30
    assert len({text for _, text, _, _ in CORPUS}) >= 30


def test_corpus_equisatisfiability_and_transport():
    sat_hits = unsat_hits = skipped = 0
    for order, text, alphabet, max_len in CORPUS:
        r1, r2, res = corpus_verdicts(order, text, alphabet, max_len)
        if isinstance(r1, LimitExhausted) or isinstance(r2, LimitExhausted):
            skipped += 1
            continue
        sat1 = isinstance(r1, Witness)
        sat2 = isinstance(r2, Witness)
        assert sat1 == sat2, (text, type(r1).__name__, type(r2).__name__)
        if sat1:
            sat_hits += 1
            if is_scc_free(order):
                wp = pad_word(r1.word, res.padded, res.plan)
                u = frame_encode_word(wp, res.plan)
                assert models(u, res.translated), text
        else:
            unsat_hits += 1
    assert sat_hits >= 10
    assert unsat_hits >= 10
    assert skipped <= len(CORPUS) // 4


def test_transport_from_collapsed_stage_with_equivalences():
    # over a quasi-order the witness is transported from the collapsed
    # formula, whose models already respect the size guards
    phi = parse("store{a} X chk{a}")
    res = linearize_formula(phi, O_SCC, alphabet=("a",))
    r = bounded_sat(res.collapsed, ("a",), res.partial, 3, LIM)
    assert isinstance(r, Witness)
    wp = pad_word(r.word, res.padded, res.plan)
    assert models(frame_encode_word(wp, res.plan), res.translated)


def test_translated_size_stays_polynomial_in_normal_form():
    for order, text, alphabet, _ in CORPUS:
        res = linearize_formula(parse(text), order, alphabet=alphabet)
        bound = 500 * (formula_nodes(res.normal) + 1) \
            * max(1, res.plan.n * res.plan.depth)
        assert formula_nodes(res.translated) <= bound, text
