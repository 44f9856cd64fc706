import pytest
from hypothesis import given, settings, strategies as st

from ltlqo.dataword import DataWord, parse_word
from ltlqo.formulas import (FALSE, TRUE, And, Check, EvalContext, FalseF,
                            Finally, FormulaSyntaxError, Freeze, Globally,
                            Letter, Next, NoStoredValuation, Not, NotClosed,
                            NoWitnessUpTo, Or, Release, TrueF, Until,
                            UnknownLetter, WeakNext, Witness, bounded_sat,
                            eval3, evaluate, format_formula,
                            freeze_normal_form, is_closed, models, nnf,
                            parse, SearchLimits, T, F, U)
from ltlqo.order import UnknownAttribute, close


LOCK_ORDER = close({"res", "pid"}, [("res", "pid")])
LOCK_ALPHABET = {"lock", "unlock", "use", "halt"}
LOCK_FORMULA = ("G(lock -> store{pid} ((use & chk{res} -> chk{pid}) & !halt)"
                " U (unlock & chk{pid}))")


def lock_phi():
    return parse(LOCK_FORMULA, LOCK_ALPHABET, LOCK_ORDER)


def lw(pairs):
    # (letter, res, pid) triples over the lock/unlock order
    return DataWord.make(LOCK_ORDER, [(a, {"res": r, "pid": p})
                                      for a, r, p in pairs])


GOOD_WORD = lw([("lock", 1, 1), ("lock", 2, 1), ("use", 2, 1),
                ("unlock", 2, 1), ("unlock", 1, 1)])
BAD_WORD = lw([("lock", 1, 1), ("lock", 3, 2), ("use", 3, 1),
               ("unlock", 3, 1), ("halt", 9, 8), ("unlock", 1, 1)])


# ---- parsing ---------------------------------------------------------------

def test_parse_true():
    assert parse("true") == TRUE


def test_parse_until_right_assoc():
    phi = parse("a U b U c")
    assert phi == Until(Letter("a"), Until(Letter("b"), Letter("c")))


def test_parse_lock_formula_shape():
    phi = lock_phi()
    use_part = Or(Not(And(Letter("use"), Check("res"))), Check("pid"))
    want = Globally(Or(
        Not(Letter("lock")),
        Freeze("pid", Until(And(use_part, Not(Letter("halt"))),
                            And(Letter("unlock"), Check("pid"))))))
    assert phi == want


def test_freeze_scope_extends_right():
    phi = parse("store{x} a U b", order=close({"x"}, []))
    assert phi == Freeze("x", Until(Letter("a"), Letter("b")))


def test_unary_binds_tighter_than_until():
    phi = parse("X a U b")
    assert phi == Until(Next(Letter("a")), Letter("b"))


def test_parse_reports_position():
    with pytest.raises(FormulaSyntaxError):
        parse("a &")
    with pytest.raises(FormulaSyntaxError):
        parse("a b")


def test_parse_unknown_letter_and_attr():
    with pytest.raises(UnknownLetter):
        parse("zz", alphabet={"a"})
    with pytest.raises(UnknownAttribute):
        parse("chk{zz}", order=close({"x"}, []))


def test_format_roundtrip_on_samples():
    samples = [
        lock_phi(),
        parse("a U b U c"),
        parse("(a U b) U c"),
        parse("a & (b & c)"),
        parse("a | b & c"),
        parse("WX (a R b)"),
        parse("store{res} X chk{pid}", order=LOCK_ORDER),
        parse("(store{res} chk{res}) & lock", order=LOCK_ORDER),
        parse("(store{res} X chk{res}) U (store{pid} chk{pid})",
              order=LOCK_ORDER),
        parse("X ((store{res} chk{res}) | halt)", order=LOCK_ORDER),
    ]
    for phi in samples:
        assert parse(format_formula(phi), order=LOCK_ORDER) == phi


# ---- satisfaction on the lock/unlock corpus --------------------------------

def test_good_word_satisfies():
    assert models(GOOD_WORD, lock_phi())


def test_every_strict_prefix_of_good_word_fails():
    phi = lock_phi()
    for n in range(1, len(GOOD_WORD)):
        prefix = DataWord(LOCK_ORDER, GOOD_WORD.positions[:n])
        assert not models(prefix, phi), f"prefix of length {n}"


def test_bad_word_fails():
    assert not models(BAD_WORD, lock_phi())


def test_bad_word_fails_at_second_lock():
    # the stored full valuation (3,2) never recurs, so the release
    # obligation opened at position 2 cannot be met
    phi = lock_phi()
    inner = phi.child.right  # Freeze under the implication
    assert isinstance(inner, Freeze)
    assert not evaluate(EvalContext(BAD_WORD, 2), inner)


def test_vacuous_single_use_position():
    w = lw([("use", 1, 1)])
    assert models(w, lock_phi())


def test_check_semantics_res_level():
    # chk{res} compares only the res component
    phi = parse("store{pid} X chk{res}", LOCK_ALPHABET, LOCK_ORDER)
    assert evaluate(EvalContext(lw([("use", 5, 1), ("use", 5, 2)]), 1), phi)
    assert not evaluate(EvalContext(lw([("use", 5, 1), ("use", 6, 1)]), 1),
                        phi)


def test_check_needs_isomorphic_domains():
    # stored only the res cell: chk{pid} needs a 2-element domain, only
    # stores of pid level can match
    phi = parse("store{res} X chk{pid}", LOCK_ALPHABET, LOCK_ORDER)
    assert not evaluate(EvalContext(lw([("use", 1, 1), ("use", 1, 1)]), 1),
                        phi)


def test_top_level_check_errors():
    with pytest.raises(NoStoredValuation):
        evaluate(EvalContext(GOOD_WORD, 1), Check("res"))
    with pytest.raises(NotClosed):
        models(GOOD_WORD, Check("res"))


def test_is_closed():
    assert not is_closed(Check("res"))
    assert is_closed(Freeze("res", Check("res")))
    assert is_closed(lock_phi())


# ---- random instances ------------------------------------------------------

AB_ORDER = close({"x1", "x2"}, [("x1", "x2")])


def formulas(max_depth=3):
    leaves = st.sampled_from([TRUE, FALSE, Letter("a"), Letter("b"),
                              Check("x1"), Check("x2")])

    def extend(children):
        unary = st.sampled_from(["!", "X", "WX", "G", "F", "dx1", "dx2"])
        return st.one_of(
            st.tuples(unary, children).map(_mk1),
            st.tuples(st.sampled_from(["&", "|", "U", "R"]),
                      children, children).map(_mk2),
        )
    return st.recursive(leaves, extend, max_leaves=6)


def _mk1(t):
    op, c = t
    return {"!": Not, "X": Next, "WX": WeakNext, "G": Globally,
            "F": Finally, "dx1": lambda f: Freeze("x1", f),
            "dx2": lambda f: Freeze("x2", f)}[op](c)


def _mk2(t):
    op, l, r = t
    return {"&": And, "|": Or, "U": Until, "R": Release}[op](l, r)


def words(max_len=5):
    position = st.tuples(st.sampled_from(["a", "b"]),
                         st.integers(0, 2), st.integers(0, 2))
    return st.lists(position, min_size=1, max_size=max_len).map(
        lambda ps: DataWord.make(
            AB_ORDER, [(a, {"x1": v1, "x2": v2}) for a, v1, v2 in ps]))


def close_up(phi):
    return Freeze("x2", phi)


@settings(max_examples=200, deadline=None)
@given(words(), formulas())
def test_permutation_invariance(w, phi):
    f = close_up(phi)
    ren = {0: 7, 1: 3, 2: 11}
    w2 = DataWord.make(w.order, [
        (a, {k: ren[v] for k, v in dict(val).items()})
        for a, val in w.positions])
    assert models(w, f) == models(w2, f)


@settings(max_examples=200, deadline=None)
@given(words(), formulas())
def test_nnf_preserves_verdict(w, phi):
    f = close_up(phi)
    assert models(w, f) == models(w, nnf(f))


@settings(max_examples=200, deadline=None)
@given(words(), formulas())
def test_freeze_normal_form_preserves_verdict(w, phi):
    f = close_up(phi)
    assert models(w, f) == models(w, freeze_normal_form(f, AB_ORDER))


def freeze_children_ok(phi):
    t = type(phi)
    if t is Freeze:
        c = phi.child
        ok = type(c) in (Next, WeakNext, Check) or (
            type(c) is Not and type(c.child) is Check)
        return ok and freeze_children_ok(c if type(c) is Check else
                                         getattr(c, "child", c))
    if t in (And, Or, Until, Release):
        return freeze_children_ok(phi.left) and freeze_children_ok(phi.right)
    if t in (Not, Next, WeakNext, Globally, Finally):
        return freeze_children_ok(phi.child)
    return True


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_freeze_normal_form_shape(phi):
    assert freeze_children_ok(freeze_normal_form(close_up(phi), AB_ORDER))


@settings(max_examples=200, deadline=None)
@given(words(), formulas())
def test_abbreviations_cohere(w, phi):
    f = close_up(phi)
    assert models(w, Globally(f)) == models(w, Release(FALSE, f))
    assert models(w, Finally(f)) == models(w, Until(TRUE, f))
    assert models(w, WeakNext(f)) == models(w, Not(Next(Not(f))))


@settings(max_examples=150, deadline=None)
@given(words(), formulas())
def test_eval3_closed_matches_evaluate(w, phi):
    f = close_up(phi)
    assert (eval3(w, f, open_end=False) == T) == models(w, f)


@settings(max_examples=150, deadline=None)
@given(words(max_len=3), formulas(), words(max_len=2))
def test_eval3_open_verdicts_persist(w, phi, ext):
    f = close_up(phi)
    v = eval3(w, f, open_end=True)
    if v != U:
        w2 = DataWord(w.order, w.positions + ext.positions)
        assert (eval3(w2, f, open_end=True) == v)
        assert (models(w2, f)) == (v == T)


# ---- bounded satisfiability ------------------------------------------------

def test_bounded_sat_letter():
    q = close({"x"}, [])
    r = bounded_sat(parse("a"), {"a", "b"}, q, 1)
    assert isinstance(r, Witness) and len(r.word) == 1
    assert r.word.letter(0) == "a"


def test_bounded_sat_next_needs_two():
    q = close({"x"}, [])
    r1 = bounded_sat(parse("X true"), {"a"}, q, 1)
    assert isinstance(r1, NoWitnessUpTo)
    r2 = bounded_sat(parse("X true"), {"a"}, q, 2)
    assert isinstance(r2, Witness) and len(r2.word) == 2


def test_bounded_sat_lock_formula():
    r = bounded_sat(lock_phi(), LOCK_ALPHABET, LOCK_ORDER, 2)
    assert isinstance(r, Witness) and len(r.word) == 1
    assert models(r.word, lock_phi())


def test_bounded_sat_unsat_within_bound():
    q = close({"x"}, [])
    phi = parse("a & !a")
    r = bounded_sat(phi, {"a"}, q, 3)
    assert isinstance(r, NoWitnessUpTo) and r.max_len == 3


def test_bounded_sat_needs_fresh_value():
    # a run where the second position must carry a different value
    q = close({"x"}, [])
    phi = parse("store{x} X !chk{x}", order=q)
    r = bounded_sat(phi, {"a"}, q, 2)
    assert isinstance(r, Witness)
    vals = [r.word.valuation(i)["x"] for i in range(2)]
    assert vals == [0, 1]


def test_bounded_sat_minimal_and_least():
    q = close({"x"}, [])
    phi = parse("F b", {"a", "b"}, q)
    r = bounded_sat(phi, {"a", "b"}, q, 3)
    # length 1 word `b` is the least witness
    assert isinstance(r, Witness) and len(r.word) == 1
    assert r.word.letter(0) == "b"


def test_bounded_sat_limit():
    q = close({"x"}, [])
    phi = parse("store{x} X !chk{x}", order=q)
    from ltlqo.formulas import LimitExhausted
    r = bounded_sat(phi, {"a"}, q, 2, SearchLimits(max_nodes=1))
    assert isinstance(r, LimitExhausted)
