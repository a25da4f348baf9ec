import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssalab.domains import (Cnf, ColoringAdapter, PegAdapter, SatAdapter, brute_force_unit_fixpoint, chain_tree,
                            cycle_graph, generate_instance, oracle_solve, reference_parse, reference_traversal,
                            star_tree)
from ssalab.domains.io import (cnf_from_dimacs, cnf_to_dimacs, graph_from_text, graph_to_text, tree_from_text,
                               tree_to_text)
from ssalab.domains.sat import evaluate
from ssalab.errors import InvalidParams, ResourceLimit
from ssalab.search.core import Action, ReactiveOracle, initial_state, run_search, step
from ssalab.search.policies import exhaustive_policy


def test_unit_clause_forces():
    a = SatAdapter(Cnf.from_lists(2, [[1], [1, 2]]))
    forced, conflict, _ = a.propagate({}, None)
    assert [(v, val) for v, val, _ in forced] == [(0, True)] and conflict is None


def test_example1_oracle(example1):
    sat, w = oracle_solve(example1)
    assert sat and evaluate(example1, w)
    assert oracle_solve(Cnf.from_lists(1, [[1], [-1]]))[0] is False
    assert oracle_solve(Cnf(2, ()))[0] is True


def test_oracle_node_cap():
    cnf = generate_instance("sat-random", {"n": 40, "alpha": 4.26}, 0)
    with pytest.raises(ResourceLimit):
        oracle_solve(cnf, node_cap=3)


def test_gc_cycle_domains():
    a = ColoringAdapter(cycle_graph(4))
    s = step(initial_state(a), Action.branch(0, 0), a).state_after
    assert 0 not in s.domains[1] and 0 not in s.domains[3]
    assert s.domains[2] == (0, 1, 2, 3)


def test_planted_sizes_and_satisfiable():
    cnf = generate_instance("sat-planted", {"n": 50, "alpha": 4.0}, 42)
    assert len(cnf.clauses) == 200
    for c in cnf.clauses:
        assert len({abs(l) for l in c}) == 3
    assert oracle_solve(cnf)[0]
    assert len(set(cnf.clauses)) == len(cnf.clauses)


def test_gc_mean_edge_count():
    counts = [len(generate_instance("gc", {"n": 30, "p": 0.35}, s).edges) for s in range(1000)]
    # sd of the mean is about 0.23
    assert abs(np.mean(counts) - 152.25) < 1.0


def test_star_and_traversals():
    t = star_tree(4, np.random.default_rng(0))
    assert len(t.kids(t.root)) == 4 and all(not t.kids(c) for c in t.kids(t.root))
    s3 = star_tree(3, np.random.default_rng(1))
    assert reference_traversal(s3, "dfs") == reference_traversal(s3, "bfs") == [s3.root, *s3.kids(s3.root)]
    c = chain_tree(3)
    assert reference_traversal(c, "dfs") == reference_traversal(c, "bfs") == [c.root, *c.kids(c.root),
                                                                               *c.kids(c.kids(c.root)[0])]


def test_random_tree_shape():
    t = generate_instance("tree", {"nodes": 20}, 3)
    parents = t.parent_map()
    assert len(t.nodes) == 20 and len(parents) == 19
    for u in t.nodes:
        assert len(t.kids(u)) in (0, 2, 3, 4)


def test_invalid_params():
    with pytest.raises(InvalidParams):
        generate_instance("blocks-world", {}, 0)
    with pytest.raises(InvalidParams):
        Cnf.from_lists(2, [[3]])


def test_serialization_round_trips():
    cnf = generate_instance("sat-planted", {"n": 10, "alpha": 4.0}, 0)
    assert cnf_from_dimacs(cnf_to_dimacs(cnf)) == cnf
    assert cnf_to_dimacs(cnf).startswith("p cnf 10 40")
    g = generate_instance("gc", {"n": 8, "p": 0.4}, 0)
    assert graph_from_text(graph_to_text(g)) == g
    t = generate_instance("tree", {"nodes": 12}, 0)
    assert tree_from_text(tree_to_text(t)) == t


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 8), m=st.integers(0, 30), k=st.integers(1, 3))
def test_unit_propagation_matches_fixpoint(seed, n, m, k):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    clauses = [[int(v + 1) * int(rng.choice([-1, 1])) for v in rng.choice(n, k, replace=False)] for _ in range(m)]
    cnf = Cnf.from_lists(n, clauses)
    assign = {int(v): bool(rng.integers(2)) for v in rng.choice(n, int(rng.integers(0, n)), replace=False)}
    forced, conflict, _ = SatAdapter(cnf).propagate(assign, None)
    ref_assign, ref_conflict = brute_force_unit_fixpoint(cnf, assign)
    assert (conflict is not None) == ref_conflict
    if conflict is None:
        assert {**assign, **{v: val for v, val, _ in forced}} == ref_assign


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_planted_assignment_satisfies(seed):
    from ssalab.domains.sat import planted_3sat
    cnf, hidden = planted_3sat(12, 4.0, np.random.default_rng(seed))
    assert evaluate(cnf, hidden)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_gc_domains_exclude_neighbour_colours(seed):
    g = generate_instance("gc", {"n": 8, "p": 0.4, "k": 3}, seed)
    a = ColoringAdapter(g)
    rng = np.random.default_rng(seed)
    assign = {int(u): int(rng.integers(3)) for u in rng.choice(8, 4, replace=False)}
    doms = a.domains(assign)
    nbrs = g.neighbors
    for u in range(8):
        if u in assign:
            continue
        expect = tuple(c for c in range(3) if all(assign.get(w) != c for w in nbrs[u]))
        assert doms[u] == expect


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 100_000), length=st.integers(1, 9), valid=st.booleans())
def test_peg_search_matches_reference(seed, length, valid):
    task = generate_instance("peg", {"length": length, "valid": valid}, seed)
    res, _ = run_search(PegAdapter(task), exhaustive_policy, ReactiveOracle())
    assert res.solved == reference_parse(task)
