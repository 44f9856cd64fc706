import time

import pytest

from ltlqo.formulas import (And, Check, FalseF, Freeze, Letter, Next, Not,
                            Or, Release, SearchLimits, TrueF, Until,
                            WeakNext, Witness, bounded_sat, models, parse)
from ltlqo.linearize import line_order, linearize_formula
from ltlqo.ltl2ncs import (NotLinearOrder, NotNormalized, Reduction,
                           attr_level, core_form, replay_compatibility,
                           sub_closure, translate)
from ltlqo.ncs import (Covered, CoverLimits, Exhausted, NcsRule, bare,
                       cover, mk_config)
from ltlqo.order import close

from test_formulas import LOCK_ALPHABET, LOCK_FORMULA, LOCK_ORDER


L1 = line_order(1)
L2 = line_order(2)
A = ("a",)
AB = ("a", "b")


def compile_formula(text, alphabet, k):
    phi = core_form(parse(text, alphabet, line_order(k)))
    return Reduction(phi, alphabet, k)


# ---------------------------------------------------------------------------
# attribute levels and normal-form validation


def test_attr_level_reads_chain_position():
    assert attr_level("l1") == 1
    assert attr_level("l12") == 12


@pytest.mark.parametrize("attr", ["x", "l0", "l", "l01", "pid"])
def test_attr_level_rejects_non_chain_names(attr):
    with pytest.raises(NotLinearOrder):
        attr_level(attr)


def test_core_form_expands_always_and_eventually():
    assert core_form(parse("G a")) == Release(FalseF(), Letter("a"))
    assert core_form(parse("F a")) == Until(TrueF(), Letter("a"))
    got = core_form(parse("G (a -> F b)"))
    assert got == Release(FalseF(), Or(Not(Letter("a")),
                                       Until(TrueF(), Letter("b"))))


def test_translate_rejects_open_formula():
    with pytest.raises(NotNormalized):
        translate(parse("chk{l1}", A, L1))


def test_translate_rejects_negation_over_compound():
    phi = Not(And(Letter("a"), Letter("b")))
    with pytest.raises(NotNormalized):
        translate(phi)


def test_translate_rejects_check_above_its_store():
    phi = parse("store{l1} X chk{l2}", A, L2)
    with pytest.raises(NotNormalized):
        translate(phi, A, 2)


def test_translate_rejects_undersized_chain():
    phi = parse("store{l2} chk{l2}", A, L2)
    with pytest.raises(NotLinearOrder):
        translate(phi, A, 1)


def test_translate_rejects_surplus_letters_missing_from_alphabet():
    with pytest.raises(ValueError):
        translate(parse("a & b", AB, L1), ("a",), 1)


# ---------------------------------------------------------------------------
# the formula closure


def test_closure_of_letter_is_singleton():
    assert sub_closure(Letter("a")) == frozenset({Letter("a")})


def test_closure_of_until_adds_one_unfolding():
    a, b = Letter("a"), Letter("b")
    u = Until(a, b)
    want = {a, b, u, Next(u), And(a, Next(u)), Or(b, And(a, Next(u)))}
    assert sub_closure(u) == frozenset(want)


def closure_fixpoint(phi):
    # saturation formulated as a set fixpoint rather than a worklist
    fs = {phi}
    while True:
        new = set(fs)
        for f in fs:
            t = type(f)
            if t in (And, Or, Until, Release):
                new.update((f.left, f.right))
            elif t in (Not, Next, WeakNext, Freeze):
                new.add(f.child)
            if t is Until:
                new.add(Or(f.right, And(f.left, Next(f))))
            elif t is Release:
                new.add(And(f.right, Or(f.left, WeakNext(f))))
        if new == fs:
            return frozenset(fs)
        fs = new


def test_closure_of_linearized_lock_formula_matches_fixpoint():
    phi = parse(LOCK_FORMULA, LOCK_ALPHABET, LOCK_ORDER)
    flat = linearize_formula(phi, LOCK_ORDER, alphabet=LOCK_ALPHABET)
    core = core_form(flat.translated)
    got = sub_closure(core)
    assert got == closure_fixpoint(core)
    assert len(got) == 77


def test_closure_is_closed_under_unfolding_parts():
    for text, ab, k in [("a U (b & X a)", AB, 1),
                        ("G (store{l1} WX chk{l1})", A, 1)]:
        red = compile_formula(text, ab, k)
        for f in red.closure:
            if type(f) is Until:
                assert Or(f.right, And(f.left, Next(f))) in red.closure
            elif type(f) is Release:
                assert And(f.right, Or(f.left, WeakNext(f))) in red.closure


# ---------------------------------------------------------------------------
# machine shape


def test_initial_configuration_is_one_checked_branch():
    red = compile_formula("store{l2} chk{l2}", A, 2)
    chain = mk_config("y{}", (mk_config("y{}"),))
    assert red.init == mk_config("setup", (mk_config("stor", (chain,)),))
    assert red.target == bare("q_final")


def test_generator_is_pure_and_deterministic():
    red = compile_formula("a U b", AB, 1)
    first = red.gen(red.init)
    again = red.gen(red.init)
    assert first == again
    assert all(isinstance(r, NcsRule) for r, _ in first)


# ---------------------------------------------------------------------------
# the three contract searches


def test_single_letter_formula_covers():
    gen, init, target = translate(parse("a", A, L1), A, 1)
    res = cover(gen, init, target, CoverLimits(max_configs=5_000))
    assert isinstance(res, Covered)


def test_letter_contradiction_stays_uncovered():
    gen, init, target = translate(parse("a & !a", AB, L1), AB, 1)
    res = cover(gen, init, target, CoverLimits(max_configs=10_000))
    assert not isinstance(res, Covered)
    assert not isinstance(res, Exhausted)


def test_store_then_check_covers_with_one_advance():
    red = compile_formula("store{l1} X chk{l1}", A, 1)
    res = cover(red.gen, red.init, red.target,
                CoverLimits(max_configs=20_000))
    assert isinstance(res, Covered)
    advances = [rule for rule, _ in res.run
                if red.schema_of(rule) == "advance_in"]
    assert len(advances) == 1
    word = replay_compatibility(red, res.run)
    assert len(word.positions) == 2
    assert [p[0] for p in word.positions] == ["a", "a"]
    v1, v2 = (dict(p[1])["l1"] for p in word.positions)
    assert v1 == v2
    assert models(word, red.phi)


# ---------------------------------------------------------------------------
# corpus: bounded word search against coverability
#
# Entries marked cover=True must be found; cover=False entries are either
# unsatisfiable or their witness lies beyond the configured search budget,
# and the verdict must then be a budget verdict, never a definite no for
# a satisfiable formula. |sub(phi)| stays at most 8 throughout.

CORPUS = [
    # text, alphabet, k, sat, cover, max_configs
    ("a", AB, 1, True, True, 5_000),
    ("b", AB, 1, True, True, 5_000),
    ("!a", AB, 1, True, True, 5_000),
    ("a | !a", AB, 1, True, True, 5_000),
    ("X a", AB, 1, True, True, 5_000),
    ("X X b", AB, 1, True, True, 5_000),
    ("WX a", AB, 1, True, True, 5_000),
    ("X (a & X b)", AB, 1, True, True, 20_000),
    ("a U b", AB, 1, True, True, 5_000),
    ("a R b", AB, 1, True, True, 20_000),
    ("a & X !a", AB, 1, True, True, 20_000),
    ("F b", AB, 1, True, True, 5_000),
    ("G a", AB, 1, True, True, 20_000),
    ("G !a", AB, 1, True, True, 20_000),
    ("a U (b & X a)", AB, 1, True, True, 20_000),
    ("(a & !a) | b", AB, 1, True, True, 5_000),
    ("a & X (a U b)", AB, 1, True, True, 20_000),
    ("a & !a", AB, 1, False, False, 2_000),
    ("X (a & !a)", AB, 1, False, False, 2_000),
    ("a U (b & !b)", AB, 1, False, False, 2_000),
    ("G (a & !a)", AB, 1, False, False, 2_000),
    ("!a & !b", AB, 1, False, False, 2_000),
    ("store{l1} chk{l1}", A, 1, True, True, 5_000),
    ("store{l1} X chk{l1}", A, 1, True, True, 5_000),
    ("store{l1} X !chk{l1}", A, 1, True, True, 20_000),
    ("store{l1} (a & X chk{l1})", A, 1, True, True, 20_000),
    ("store{l1} X (a & chk{l1})", A, 1, True, True, 20_000),
    ("X store{l1} X chk{l1}", A, 1, True, True, 20_000),
    ("store{l1} X X chk{l1}", A, 1, True, True, 20_000),
    ("store{l1} WX chk{l1}", A, 1, True, True, 5_000),
    ("a U store{l1} X chk{l1}", A, 1, True, True, 20_000),
    ("G (store{l1} WX chk{l1})", A, 1, True, True, 20_000),
    ("b & store{l1} X (b & chk{l1})", AB, 1, True, True, 20_000),
    ("store{l1} X (chk{l1} & !chk{l1})", A, 1, False, False, 2_000),
    ("G (store{l1} X chk{l1})", A, 1, False, False, 2_000),
    ("store{l2} chk{l2}", A, 2, True, True, 5_000),
    ("store{l2} chk{l1}", A, 2, True, True, 5_000),
    ("store{l2} WX chk{l2}", A, 2, True, True, 5_000),
    ("store{l2} (chk{l1} & chk{l2})", A, 2, True, True, 5_000),
    # the copy phase multiplies configurations at depth two faster than
    # the budget admits, so this satisfiable entry stays a budget verdict
    ("store{l2} X chk{l2}", A, 2, True, False, 2_500),
    ("store{l2} (chk{l2} & !chk{l2})", A, 2, False, False, 2_000),
]

BOUNDED_LEN = 4
REPLAY_CAP = 30


def corpus_row(entry):
    text, alphabet, k, sat, expect_cover, max_configs = entry
    order = line_order(k)
    phi = core_form(parse(text, alphabet, order))
    red = Reduction(phi, alphabet, k)
    found = bounded_sat(phi, alphabet, order, BOUNDED_LEN,
                        SearchLimits(max_nodes=200_000))
    res = cover(red.gen, red.init, red.target,
                CoverLimits(max_configs=max_configs))
    return red, isinstance(found, Witness), res


def test_corpus_is_large_and_in_bounds():
    assert len(CORPUS) >= 25
    assert {entry[2] for entry in CORPUS} == {1, 2}
    assert sum(1 for e in CORPUS if e[4]) >= 20
    assert sum(1 for e in CORPUS if not e[3]) >= 6
    for text, alphabet, k, sat, expect_cover, _ in CORPUS:
        assert sat or not expect_cover
        phi = core_form(parse(text, alphabet, line_order(k)))
        assert len(sub_closure(phi)) <= 8, text


@pytest.mark.parametrize("entry", CORPUS, ids=[e[0] for e in CORPUS])
def test_corpus_bounded_search_agrees_with_coverability(entry):
    text, alphabet, k, sat, expect_cover, max_configs = entry
    red, bounded_found, res = corpus_row(entry)
    assert bounded_found == sat, text
    if expect_cover:
        assert isinstance(res, Covered), text
    else:
        assert not isinstance(res, Covered), text
        if sat:
            # a definite no would contradict the bounded witness
            assert not isinstance(res, Exhausted), text
    if isinstance(res, Covered):
        assert sat, f"covered an unsatisfiable formula: {text}"
        assert len(res.run) <= REPLAY_CAP
        word = replay_compatibility(red, res.run)
        assert 1 <= len(word.positions) <= REPLAY_CAP
        assert word.order.attrs == {f"l{i}" for i in range(1, red.k + 1)}
        assert all(letter in red.alphabet for letter, _ in word.positions)


# ---------------------------------------------------------------------------
# generated rules all belong to the schema catalogue


def sample_rules(red, depth, cap=4_000):
    frontier = [red.init]
    seen = {red.init}
    rules = []
    for _ in range(depth):
        nxt = []
        for c in frontier:
            for rule, s in red.gen(c):
                rules.append(rule)
                if s not in seen and len(seen) < cap:
                    seen.add(s)
                    nxt.append(s)
        frontier = nxt
    return rules


@pytest.mark.parametrize("text,alphabet,k", [
    ("a U b", AB, 1),
    ("store{l1} X !chk{l1}", A, 1),
    ("G (store{l1} WX chk{l1})", A, 1),
    ("store{l2} (chk{l1} & chk{l2})", A, 2),
])
def test_every_sampled_rule_matches_a_schema(text, alphabet, k):
    red = compile_formula(text, alphabet, k)
    rules = sample_rules(red, depth=5)
    assert rules
    names = {red.schema_of(rule) for rule in rules}
    assert None not in names


def test_covering_run_rules_all_classify():
    red = compile_formula("G (store{l1} WX chk{l1})", A, 1)
    res = cover(red.gen, red.init, red.target,
                CoverLimits(max_configs=20_000))
    assert isinstance(res, Covered)
    names = [red.schema_of(rule) for rule, _ in res.run]
    assert None not in names
    assert names[-1] == "finish"


def test_schema_checker_rejects_foreign_rules():
    red = compile_formula("a U b", AB, 1)
    bad = [
        NcsRule(("stor",), ("aux",)),
        NcsRule(("add:a", "stor"), ("add:b", "stor")),
        NcsRule(("setup",), ("setup",)),
        # adds a formula outside the closure
        NcsRule(("add:a", "stor", "y{}"), ("add:a", "stor", "y{c}")),
        # conjunction without both conjuncts present in the cell
        NcsRule(("add:a", "stor", "y{a}"),
                ("add:a", "stor", "y{a;a & X (a U b)}")),
    ]
    for rule in bad:
        assert red.schema_of(rule) is None, rule


