import itertools

import pytest
from hypothesis import given, settings, strategies as st

from ltlqo.order import (QuasiOrder, UnknownAttribute, analyze, close,
                         collapse_sccs, downward_closure, format_order,
                         parse_order)


# Independent oracle: reachability closure via BFS over the raw edge list,
# plus reflexivity. Deliberately a different algorithm from the module's
# Warshall fixpoint.
def closure_oracle(attrs, pairs):
    attrs = set(attrs)
    succ = {a: set() for a in attrs}
    for x, y in pairs:
        succ[x].add(y)
    out = set()
    for a in attrs:
        seen = {a}
        frontier = [a]
        while frontier:
            b = frontier.pop()
            for c in succ[b]:
                if c not in seen:
                    seen.add(c)
                    frontier.append(c)
        out |= {(a, b) for b in seen}
    return out


def test_close_reflexive_only():
    q = close({"x"}, [])
    assert q.pairs == frozenset({("x", "x")})


def test_close_fork_has_five_pairs():
    q = close({"x", "y", "z"}, [("x", "z"), ("y", "z")])
    assert len(q.pairs) == 5
    assert q.pairs == frozenset(closure_oracle({"x", "y", "z"},
                                               [("x", "z"), ("y", "z")]))


def test_close_transitivity_forced():
    q = close({"a", "b", "c"}, [("a", "b"), ("b", "c")])
    assert q.leq("a", "c")


def test_close_unknown_attribute():
    with pytest.raises(UnknownAttribute):
        close({"a"}, [("a", "b")])


def ex2_order():
    # two chains: x1 <= x2 <= x3 and y1 <= y2
    return close({"x1", "x2", "x3", "y1", "y2"},
                 [("x1", "x2"), ("x2", "x3"), ("y1", "y2")])


def fork_order():
    # x <= z >= y with x, y incomparable
    return close({"x", "y", "z"}, [("x", "z"), ("y", "z")])


def test_downward_closure_chain():
    assert downward_closure(ex2_order(), "x3") == {"x1", "x2", "x3"}


def test_downward_closure_minimal_element():
    q = ex2_order()
    assert downward_closure(q, "x1") == {"x1"}


def test_downward_closure_fork_top():
    assert downward_closure(fork_order(), "z") == {"x", "y", "z"}


def test_analyze_two_chains():
    r = analyze(ex2_order())
    assert r.is_tree and r.depth == 3 and r.witness is None


def test_analyze_fork_not_tree():
    r = analyze(fork_order())
    assert not r.is_tree
    x, y, z = r.witness
    q = fork_order()
    assert q.leq(x, z) and q.leq(y, z)
    assert not q.comparable(x, y)


def test_analyze_identity_order():
    r = analyze(close({"a", "b"}, []))
    assert r.is_tree and r.depth == 1


def test_collapse_identity_on_partial_order():
    q = ex2_order()
    po, rep, sizes = collapse_sccs(q)
    assert po.pairs == q.pairs
    assert all(rep[a] == a for a in q.attrs)
    assert all(v == 1 for v in sizes.values())


def test_collapse_two_cycle():
    q = close({"a", "b", "c"}, [("a", "b"), ("b", "a"), ("a", "c")])
    po, rep, sizes = collapse_sccs(q)
    assert rep["a"] == rep["b"] == "a"
    assert sizes["a"] == 2
    assert po.attrs == {"a", "c"}
    assert po.leq("a", "c") and not po.leq("c", "a")


def test_collapse_two_disjoint_cycles():
    q = close({"a", "b", "c", "d"},
              [("a", "b"), ("b", "a"), ("c", "d"), ("d", "c")])
    po, rep, sizes = collapse_sccs(q)
    assert sorted(sizes.values()) == [2, 2]
    assert not po.comparable("a", "c")


names = st.sampled_from(["a", "b", "c", "d", "e", "f", "g"])
random_orders = st.builds(
    lambda ps: close({"a", "b", "c", "d", "e", "f", "g"}, ps),
    st.lists(st.tuples(names, names), max_size=14),
)


@settings(max_examples=150, deadline=None)
@given(random_orders)
def test_treeness_matches_bruteforce_witness_search(q):
    r = analyze(q)
    found = None
    for x, y, z in itertools.product(sorted(q.attrs), repeat=3):
        if x < y and q.leq(x, z) and q.leq(y, z) and not q.comparable(x, y):
            found = (x, y, z)
            break
    assert r.is_tree == (found is None)


@settings(max_examples=150, deadline=None)
@given(random_orders)
def test_depth_invariant_under_collapse(q):
    po, _, _ = collapse_sccs(q)
    assert analyze(q).depth == analyze(po).depth


@settings(max_examples=100, deadline=None)
@given(random_orders)
def test_close_idempotent(q):
    assert close(q.attrs, q.pairs).pairs == q.pairs


@settings(max_examples=100, deadline=None)
@given(random_orders)
def test_closure_matches_bfs_oracle(q):
    # re-close from the closed pair set; oracle from the same input
    assert q.pairs == frozenset(closure_oracle(q.attrs, q.pairs))


def test_text_roundtrip():
    q = ex2_order()
    assert parse_order(format_order(q)).pairs == q.pairs


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_order("le a\n")
