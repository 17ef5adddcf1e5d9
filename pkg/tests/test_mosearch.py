import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentroute.intent import HardPathConstraint, avoid_above
from intentroute.mapenv import OBJECTIVES, SQRT2, CostVector, Edge, RouteGraph, generate_grid_map
from intentroute.mosearch import (
    Route,
    SearchBudgetExceeded,
    SearchSpec,
    Unreachable,
    eps_dominates,
    pareto_search,
    path_cost,
    search_routes,
    shortest_path,
    top_k,
    violating_edges,
)

import oracles


def spec(active=("dist",), weights=None, **kw):
    weights = weights or {n: 1.0 for n in active}
    return SearchSpec(tuple(active), weights, **kw)


def line_graph(costs):
    coords = tuple((float(i), 0.0) for i in range(len(costs) + 1))
    edges = {(i, i + 1): Edge(CostVector(*c)) for i, c in enumerate(costs)}
    return RouteGraph("free", coords, edges)


# -- path_cost ---------------------------------------------------------------

def test_path_cost_examples():
    g = line_graph([(1, .1, .1, .1, .1, 0), (SQRT2, .9, .9, .9, .9, .9)])
    assert path_cost(g, [0]) == CostVector()
    assert path_cost(g, [0, 1]) == CostVector(1, .1, .1, .1, .1, 0)
    total = path_cost(g, [0, 1, 2])
    assert total.dist == pytest.approx(2.414, abs=1e-3)
    assert total.scenic == pytest.approx(1.0)


def test_path_cost_errors(grid50):
    with pytest.raises(ValueError, match="not adjacent"):
        path_cost(grid50, [0, 2])
    blocked = next(k for k, e in grid50.edges.items() if not e.passable)
    with pytest.raises(ValueError, match="blocked"):
        path_cost(grid50, list(blocked))


# -- eps_dominates -----------------------------------------------------------

def test_eps_dominates_examples():
    assert not eps_dominates((1, 2), (1, 2), epsilon=0)
    assert eps_dominates((1, 2), (2, 2), epsilon=0)
    assert eps_dominates((1.0, 3.0), (1.0, 2.9), epsilon=0.1)
    # literal definition: with eps > 0 a positive vector dominates itself
    assert eps_dominates((1.0, 1.0), (1.0, 1.0), epsilon=0.1)


def test_eps_dominates_projection():
    x = CostVector(1, 5, 0, 0, 0, 0)
    y = CostVector(2, 1, 0, 0, 0, 0)
    assert eps_dominates(x, y, ("dist",))
    assert not eps_dominates(x, y, ("dist", "scenic"))


vecs = st.tuples(*[st.integers(0, 5)] * 3)


@given(vecs, vecs, vecs)
def test_eps_zero_is_strict_partial_order(a, b, c):
    assert not eps_dominates(a, a)
    if eps_dominates(a, b) and eps_dominates(b, c):
        assert eps_dominates(a, c)


# -- shortest_path -----------------------------------------------------------

def test_adjacent_direct_edge():
    g = oracles.uniform_grid(5, 5)
    r = shortest_path(g, 0, 1, spec())
    assert r.path == (0, 1)


def test_uniform_corner_to_corner():
    g = oracles.uniform_grid(5, 5)
    r = shortest_path(g, 0, 24, spec())
    assert r.cost.dist == pytest.approx(4 * SQRT2)
    assert r.cost.scenic == pytest.approx(0.4)


def test_start_equals_end():
    g = oracles.uniform_grid(3, 3)
    assert shortest_path(g, 4, 4, spec()) == Route((4,), CostVector())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_shortest_path_matches_dijkstra(seed):
    rng = np.random.default_rng(seed)
    g = oracles.random_free_graph(rng, int(rng.integers(5, 30)))
    s, t = (int(x) for x in rng.choice(g.num_nodes, 2, replace=False))
    active = ["dist", *[a for a in OBJECTIVES[1:] if rng.random() < 0.4]]
    weights = {a: float(rng.choice([0.5, 1.0, 2.0])) for a in active}
    sp = SearchSpec(tuple(active), weights)
    want = oracles.dijkstra(g, s, t, weights)
    got = shortest_path(g, s, t, sp)
    assert sp.scalarize(got.cost) == pytest.approx(want, rel=1e-12, abs=1e-12)
    assert got.cost == path_cost(g, got.path)


def test_unreachable_names_binding_constraint():
    g = line_graph([(1, .9, .1, .1, .1, .1), (1, .1, .1, .1, .1, .1)])
    hard = (avoid_above("scenic", 0.5), avoid_above("toll", 0.5))
    with pytest.raises(Unreachable) as info:
        shortest_path(g, 0, 2, spec(hard=hard))
    assert list(info.value.binding) == [avoid_above("scenic", 0.5)]
    assert "scenic" in str(info.value)


def test_forbid_edges_respected():
    g = oracles.uniform_grid(3, 1)
    forbid = HardPathConstraint("forbid_edges", edges=(((0, 0), (1, 0)),))
    with pytest.raises(Unreachable):
        shortest_path(g, 0, 2, spec(hard=(forbid,)))


def test_require_below_is_strict():
    g = line_graph([(1, .5, .1, .1, .1, .1)])
    c = HardPathConstraint("require_attr_below", "scenic", 0.5)
    with pytest.raises(Unreachable):
        shortest_path(g, 0, 1, spec(hard=(c,)))
    assert shortest_path(g, 0, 1, spec(hard=(avoid_above("scenic", 0.5),))).path == (0, 1)


# -- pareto_search -----------------------------------------------------------

def _front(g, s, t, active, hard=()):
    paths = oracles.simple_paths(g, s, t, hard)
    return oracles.pareto_front(oracles.project(c, active) for _, c in paths)


def test_dominant_path_gives_singleton():
    coords = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 0.0))
    edges = {
        (0, 1): Edge(CostVector(1, .1, 0, 0, 0, 0)), (1, 3): Edge(CostVector(1, .1, 0, 0, 0, 0)),
        (0, 2): Edge(CostVector(1.5, .5, 0, 0, 0, 0)), (2, 3): Edge(CostVector(1.5, .5, 0, 0, 0, 0)),
    }
    g = RouteGraph("free", coords, edges)
    ps = pareto_search(g, 0, 3, spec(("dist", "scenic"), epsilon=0))
    assert [r.path for r in ps] == [(0, 1, 3)]


@pytest.mark.parametrize("seed", range(8))
def test_small_grid_exact_front(seed):
    g = generate_grid_map(4, 3, seed=seed, block_fraction=0)
    active = ("dist", "scenic")
    ps = pareto_search(g, 0, 11, spec(active, epsilon=0))
    got = {oracles.project(r.cost, active) for r in ps}
    assert got == _front(g, 0, 11, active)


@pytest.mark.parametrize("eps", [0.1, 0.2])
@pytest.mark.parametrize("seed", range(8))
def test_small_grid_eps_cover(seed, eps):
    g = generate_grid_map(4, 3, seed=seed, block_fraction=0)
    active = ("dist", "scenic", "toll")
    ps = pareto_search(g, 0, 11, spec(active, epsilon=eps))
    sols = [oracles.project(r.cost, active) for r in ps]
    for p in _front(g, 0, 11, active):
        assert any(oracles.eps_dom(s, p, eps) or s == p for s in sols)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.0, 0.1, 0.2]))
def test_pareto_solution_invariants(seed, eps):
    rng = np.random.default_rng(seed)
    g = oracles.random_free_graph(rng, int(rng.integers(6, 16)))
    s, t = (int(x) for x in rng.choice(g.num_nodes, 2, replace=False))
    active = ("dist", "scenic", "danger")
    hard = (avoid_above("energy", 0.9),) if rng.random() < 0.5 else ()
    try:
        ps = pareto_search(g, s, t, spec(active, epsilon=eps, hard=hard))
    except Unreachable:
        assert oracles.dijkstra(g, s, t, {"dist": 1.0}, hard) is None
        return
    for i, r in enumerate(ps.solutions):
        assert r.cost == path_cost(g, r.path)
        assert r.path[0] == s and r.path[-1] == t
        assert violating_edges(g, r.path, hard) == []
        for earlier in ps.solutions[:i]:
            assert not eps_dominates(earlier.cost, r.cost, active, eps)
    sols = [oracles.project(r.cost, active) for r in ps]
    for p in _front(g, s, t, active, hard):
        assert any(oracles.eps_dom(x, p, eps) or x == p for x in sols)


def test_budget_exceeded():
    g = generate_grid_map(20, 20, seed=3)
    with pytest.raises(SearchBudgetExceeded):
        pareto_search(g, 0, 399, spec(("dist", "scenic", "toll"), epsilon=0, max_labels=50))


def test_pareto_needs_two_objectives():
    with pytest.raises(ValueError):
        pareto_search(oracles.uniform_grid(3, 3), 0, 8, spec())


# -- top_k / search_routes -----------------------------------------------------

def test_top_k_hand_example():
    a = Route((0, 1), CostVector(10, 2))
    b = Route((0, 2), CostVector(8, 6))
    sp = spec(("dist", "scenic"), k=2)
    assert top_k([b, a], sp) == [a, b]
    assert top_k([b, a], spec(("dist", "scenic"), k=1)) == [a]
    assert top_k([b, a], spec(("dist", "scenic"), k=5)) == [a, b]


def test_top1_is_scalarized_optimum_at_eps0(grid50):
    sp = spec(("dist", "scenic"), {"dist": 1.0, "scenic": 0.5}, epsilon=0, k=1)
    s, t = grid50.node_at(5, 5), grid50.node_at(20, 15)
    best = search_routes(grid50, s, t, sp)[0]
    assert sp.scalarize(best.cost) == pytest.approx(sp.scalarize(shortest_path(grid50, s, t, sp).cost))


def test_search_routes_single_objective_uses_astar(grid50):
    r = search_routes(grid50, 0, 1499, spec())
    assert len(r) == 1


def test_spec_validation():
    with pytest.raises(ValueError):
        SearchSpec(("scenic",), {"scenic": 1})
    with pytest.raises(ValueError):
        SearchSpec(("dist", "scenic"), {"dist": 1})
    with pytest.raises(ValueError):
        SearchSpec(("dist",), {"dist": 1}, epsilon=-0.1)
    # active order is canonicalised
    assert SearchSpec(("toll", "dist"), {"dist": 1, "toll": 1}).active == ("dist", "toll")


def test_weight_monotonicity_corridor(corridor):
    s, t = corridor.node_at(0, 2), corridor.node_at(9, 2)
    prev = None
    for w in np.arange(0.5, 5.01, 0.5):
        r = shortest_path(corridor, s, t, spec(("dist", "scenic"), {"dist": 1.0, "scenic": float(w)}))
        if prev is not None:
            assert r.cost.scenic <= prev.cost.scenic + 1e-12
            assert r.cost.dist >= prev.cost.dist - 1e-12
        prev = r
