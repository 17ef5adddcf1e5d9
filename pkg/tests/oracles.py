"""Independent reference implementations used only by the tests.

None of these import the search code; they work directly on the edge dict.
"""
from __future__ import annotations

import heapq
import itertools
import math

from intentroute.mapenv import OBJECTIVES, CostVector, Edge, RouteGraph, octile

IDX = {n: i for i, n in enumerate(OBJECTIVES)}


def edge_ok(u, v, cost, hard, graph):
    for c in hard:
        if c.kind == "forbid_edges":
            for a, b in c.edges:
                pair = {graph.node_at(*a), graph.node_at(*b)}
                if pair == {u, v}:
                    return False
        elif c.kind == "avoid_attr_above":
            if cost[IDX[c.attribute]] > c.threshold:
                return False
        elif c.kind == "require_attr_below":
            if not cost[IDX[c.attribute]] < c.threshold:
                return False
    return True


def adjacency(graph: RouteGraph, hard=()):
    adj = {i: [] for i in range(graph.num_nodes)}
    for (u, v), e in graph.edges.items():
        if e.passable and edge_ok(u, v, e.cost, hard, graph):
            adj[u].append((v, e.cost))
            adj[v].append((u, e.cost))
    return adj


def dijkstra(graph: RouteGraph, s: int, t: int, weights: dict, hard=()):
    """Optimal scalarized cost (plain Dijkstra, no heuristic)."""
    adj = adjacency(graph, hard)
    dist = {s: 0.0}
    heap = [(0.0, s)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == t:
            return d
        for v, cost in adj[u]:
            nd = d + sum(w * cost[IDX[n]] for n, w in weights.items())
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return None


def simple_paths(graph: RouteGraph, s: int, t: int, hard=()):
    adj = adjacency(graph, hard)
    out = []
    stack = [(s, [s], CostVector())]
    while stack:
        u, path, acc = stack.pop()
        if u == t:
            out.append((tuple(path), acc))
            continue
        for v, cost in adj[u]:
            if v not in path:
                stack.append((v, path + [v], CostVector(*(a + b for a, b in zip(acc, cost)))))
    return out


def project(cost, active):
    return tuple(cost[IDX[n]] for n in active)


def dominates(a, b):
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def eps_dom(a, b, eps):
    f = 1 + eps
    return all(x <= f * y for x, y in zip(a, b)) and any(x < f * y for x, y in zip(a, b))


def pareto_front(vectors):
    vs = set(vectors)
    return {v for v in vs if not any(dominates(w, v) for w in vs if w != v)}


def best_order_length(start, end, stops, fixed=None):
    """Shortest octile tour over every permutation respecting pins."""
    fixed = fixed or {}
    best = math.inf
    for perm in itertools.permutations(range(len(stops))):
        if any(perm[pos] != i for i, pos in fixed.items()):
            continue
        pts = [start, *(stops[i] for i in perm), end]
        best = min(best, sum(octile(a, b) for a, b in zip(pts, pts[1:])))
    return best


def tour_length(points):
    return sum(octile(a, b) for a, b in zip(points, points[1:]))


def random_free_graph(rng, n, extra=None) -> RouteGraph:
    """Connected random geometric graph: a random spanning tree plus extra chords."""
    coords = tuple((float(rng.integers(0, 20)), float(rng.integers(0, 20))) for _ in range(n))
    pairs = set()
    order = list(rng.permutation(n))
    for i in range(1, n):
        a, b = int(order[i]), int(order[int(rng.integers(0, i))])
        pairs.add((min(a, b), max(a, b)))
    extra = n // 2 if extra is None else extra
    while extra > 0:
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        if (min(a, b), max(a, b)) not in pairs:
            pairs.add((min(a, b), max(a, b)))
            extra -= 1
    edges = {}
    for u, v in sorted(pairs):
        length = max(math.dist(coords[u], coords[v]), 0.5)
        attrs = [round(float(x), 6) for x in rng.uniform(0.0, 1.0, 5)]
        edges[(u, v)] = Edge(CostVector(round(length * float(rng.uniform(1.0, 1.5)), 6), *attrs))
    return RouteGraph("free", coords, edges)


def uniform_grid(width, height, value=0.1) -> RouteGraph:
    """Grid with every attribute equal to ``value`` and no blocked edges."""
    from intentroute.mapenv import SQRT2, grid_edge_list

    coords = tuple((x, y) for y in range(height) for x in range(width))
    edges = {}
    for u, v in grid_edge_list(width, height):
        (ux, uy), (vx, vy) = coords[u], coords[v]
        d = 1.0 if ux == vx or uy == vy else SQRT2
        edges[(u, v)] = Edge(CostVector(d, value, value, value, value, value))
    return RouteGraph("grid", coords, edges, width, height)
