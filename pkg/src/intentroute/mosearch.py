"""Weighted A* and epsilon-approximate Pareto search over a RouteGraph.

Costs are accumulated from the start node in path order everywhere, so a
reported cost vector is bit-identical to :func:`path_cost` of the returned
path.

The multi-objective search is a best-first label-setting search in which
each label is an *apex/representative* pair: ``apex`` is a component-wise
lower bound on every partial path the label stands for and ``rep`` is one
concrete path with ``rep <= (1 + eps) * apex``. Labels at the same node are
merged while that bound holds, and pruned when an expanded apex at the node
(or a found solution, against ``apex + h``) dominates them. Because apexes
never over-estimate, the approximation error does not compound along a path:
every Pareto-optimal path ends up epsilon-dominated by some returned route.
With ``eps = 0`` no merge is possible and the search returns the exact
Pareto front (one route per distinct cost vector).
"""
from __future__ import annotations

import heapq
import itertools
import math
import operator
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from .intent import HardPathConstraint, SearchParams
from .mapenv import OBJECTIVES, ZERO_COST, CostVector, RouteGraph

OBJ_INDEX = {name: i for i, name in enumerate(OBJECTIVES)}
DEFAULT_EPSILON = 0.1
DEFAULT_MAX_LABELS = 200_000
# keeps the float heuristic strictly below the float path sum it bounds
H_SHRINK = 1.0 - 1e-12


class SearchError(RuntimeError):
    pass


class Unreachable(SearchError):
    """No path satisfies the hard constraints; ``binding`` lists the culprits."""

    def __init__(self, start: int, end: int, binding: Sequence[HardPathConstraint]):
        self.start, self.end, self.binding = start, end, tuple(binding)
        names = ", ".join(_describe(c) for c in self.binding) or "graph connectivity"
        super().__init__(f"no path from node {start} to node {end}; binding: {names}")


class SearchBudgetExceeded(SearchError):
    pass


def _describe(c: HardPathConstraint) -> str:
    if c.kind == "forbid_edges":
        return f"forbid_edges({len(c.edges)} edges)"
    return f"{c.kind}({c.attribute}, {c.threshold})"


class Route(NamedTuple):
    path: tuple[int, ...]
    cost: CostVector


@dataclass(frozen=True)
class SearchSpec:
    active: tuple[str, ...] = ("dist",)
    weights: Mapping[str, float] = field(default_factory=lambda: {"dist": 1.0}, hash=False)
    epsilon: float = DEFAULT_EPSILON
    hard: tuple[HardPathConstraint, ...] = ()
    k: int = 3
    max_labels: int = DEFAULT_MAX_LABELS

    def __post_init__(self):
        unknown = set(self.active) - set(OBJECTIVES)
        if unknown:
            raise ValueError(f"unknown objectives {sorted(unknown)}")
        if "dist" not in self.active:
            raise ValueError("dist must be an active objective")
        active = tuple(name for name in OBJECTIVES if name in self.active)
        weights = {}
        for name in active:
            w = self.weights.get(name)
            if w is None or not w > 0:
                raise ValueError(f"weight for active objective {name!r} must be positive")
            weights[name] = float(w)
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.k < 1:
            raise ValueError("k must be positive")
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "hard", tuple(self.hard))

    @classmethod
    def from_params(cls, params: SearchParams, hard: Iterable[HardPathConstraint] = (), **kw) -> "SearchSpec":
        merged = _unique([*hard, *params.implied])
        return cls(params.active, dict(params.weights), hard=tuple(merged), **kw)

    def scalarize(self, cost: Sequence[float]) -> float:
        s = 0.0
        for name, w in self.weights.items():
            s += w * cost[OBJ_INDEX[name]]
        return s


def _unique(items):
    out = []
    for item in items:
        if item not in out:
            out.append(item)
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def path_cost(graph: RouteGraph, path: Sequence[int]) -> CostVector:
    """Component-wise sum of edge costs along ``path``."""
    if not path:
        raise ValueError("empty path")
    if path[0] not in graph:
        raise KeyError(f"unknown node {path[0]}")
    acc = ZERO_COST
    for u, v in zip(path, path[1:]):
        try:
            edge = graph.edge(u, v)
        except KeyError:
            raise ValueError(f"nodes {u} and {v} are not adjacent") from None
        if not edge.passable:
            raise ValueError(f"edge ({u}, {v}) is blocked")
        acc = CostVector(*(a + b for a, b in zip(acc, edge.cost)))
    return acc


def _project(x, active):
    if active is None:
        return tuple(x)
    if isinstance(x, CostVector) or len(x) == len(OBJECTIVES):
        return tuple(x[OBJ_INDEX[name]] for name in active)
    return tuple(x)


def eps_dominates(x: Sequence[float], y: Sequence[float], active: Iterable[str] | None = None,
                  epsilon: float = 0.0) -> bool:
    """True iff x_j <= (1+eps) y_j for every active j and x_k < (1+eps) y_k for some k.

    With ``active`` given, full six-component vectors are projected onto the
    named objectives; otherwise all components are compared.
    """
    names = None if active is None else tuple(active)
    xs, ys = _project(x, names), _project(y, names)
    f = 1.0 + epsilon
    strict = False
    for a, b in zip(xs, ys):
        bound = f * b
        if a > bound:
            return False
        if a < bound:
            strict = True
    return strict


def _weakly_le(a, b) -> bool:
    return all(map(operator.le, a, b))


class _EdgeView:
    """Passable edges of a graph minus those ruled out by hard constraints."""

    def __init__(self, graph: RouteGraph, hard: Sequence[HardPathConstraint], spec: SearchSpec | None = None):
        self.graph = graph
        self.limits = []  # (index, threshold, strict)
        self.forbidden: set[tuple[int, int]] = set()
        for c in hard:
            if c.kind == "forbid_edges":
                for a, b in c.edges:
                    u, v = graph.node_at(*a), graph.node_at(*b)
                    self.forbidden.add((min(u, v), max(u, v)))
            elif c.kind == "avoid_attr_above":
                self.limits.append((OBJ_INDEX[c.attribute], c.threshold, False))
            elif c.kind == "require_attr_below":
                self.limits.append((OBJ_INDEX[c.attribute], c.threshold, True))
            else:
                raise ValueError(f"unknown constraint kind {c.kind!r}")
        self.iw = [(OBJ_INDEX[n], w) for n, w in spec.weights.items()] if spec else []
        self._cache: dict[int, list] = {}

    def allows(self, u: int, v: int, cost: Sequence[float]) -> bool:
        if (min(u, v), max(u, v)) in self.forbidden:
            return False
        for i, thr, strict in self.limits:
            if cost[i] > thr or (strict and cost[i] >= thr):
                return False
        return True

    def out(self, u: int):
        """[(v, cost, scalar_weight)] for allowed edges leaving ``u``."""
        lst = self._cache.get(u)
        if lst is None:
            lst = []
            for v, cost in self.graph.neighbors(u):
                if self.allows(u, v, cost):
                    s = 0.0
                    for i, w in self.iw:
                        s += w * cost[i]
                    lst.append((v, cost, s))
            self._cache[u] = lst
        return lst


def violating_edges(graph: RouteGraph, path: Sequence[int], hard: Sequence[HardPathConstraint]):
    """Edges of ``path`` that break any of ``hard``."""
    view = _EdgeView(graph, hard)
    return [(u, v) for u, v in zip(path, path[1:]) if not view.allows(u, v, graph.edge(u, v).cost)]


def _reachable(graph, start, end, hard) -> bool:
    view = _EdgeView(graph, hard)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == end:
            return True
        for v, _, _ in view.out(u):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return False


def _unreachable(graph, start, end, hard) -> Unreachable:
    binding = [c for c in hard if _reachable(graph, start, end, [o for o in hard if o is not c])]
    if not binding:
        binding = list(hard)
    return Unreachable(start, end, binding)


def _check_endpoints(graph, start, end):
    for node in (start, end):
        if node not in graph:
            raise KeyError(f"unknown node {node}")


# ---------------------------------------------------------------------------
# single objective
# ---------------------------------------------------------------------------

def shortest_path(graph: RouteGraph, start: int, end: int, spec: SearchSpec) -> Route:
    """A* on the scalarized edge weight sum_j w_j c_j over the active set.

    The heuristic ``w_dist * octile`` is consistent, and the search keeps
    popping until no open label can beat the best goal cost, so the returned
    scalar cost equals the exact (float) optimum.
    """
    _check_endpoints(graph, start, end)
    if start == end:
        return Route((start,), ZERO_COST)
    view = _EdgeView(graph, spec.hard, spec)
    w_dist = spec.weights["dist"] * H_SHRINK

    g = {start: 0.0}
    parent: dict[int, int | None] = {start: None}
    heap = [(w_dist * graph.dist_lower_bound(start, end), 0.0, start)]
    best = math.inf
    while heap:
        f, gu, u = heapq.heappop(heap)
        if f >= best:
            break
        if gu > g[u]:
            continue
        if u == end:
            best = gu
            continue
        for v, _, s in view.out(u):
            gv = gu + s
            if gv < g.get(v, math.inf):
                g[v] = gv
                parent[v] = u
                heapq.heappush(heap, (gv + w_dist * graph.dist_lower_bound(v, end), gv, v))
    if end not in g:
        raise _unreachable(graph, start, end, spec.hard)
    path = [end]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return Route(tuple(path), path_cost(graph, path))


# ---------------------------------------------------------------------------
# multi objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParetoSet:
    solutions: tuple[Route, ...]
    active: tuple[str, ...]
    epsilon: float
    labels: int = 0

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)


class _Label:
    __slots__ = ("node", "apex", "rep", "cost", "trail", "alive")

    def __init__(self, node, apex, rep, cost, trail):
        self.node = node
        self.apex = apex
        self.rep = rep
        self.cost = cost
        self.trail = trail
        self.alive = True

    def path(self) -> tuple[int, ...]:
        out = []
        t = self.trail
        while t is not None:
            out.append(t[0])
            t = t[1]
        return tuple(reversed(out))


def pareto_search(graph: RouteGraph, start: int, end: int, spec: SearchSpec) -> ParetoSet:
    """Epsilon-approximate Pareto set of start-end routes over ``spec.active``.

    Returned routes are in discovery order; no route is epsilon-dominated by
    one found before it. Raises :class:`Unreachable` or
    :class:`SearchBudgetExceeded` (more than ``spec.max_labels`` labels).
    """
    if len(spec.active) < 2:
        raise ValueError("pareto_search needs at least two active objectives")
    _check_endpoints(graph, start, end)
    if start == end:
        return ParetoSet((Route((start,), ZERO_COST),), spec.active, spec.epsilon)

    idx = [OBJ_INDEX[name] for name in spec.active]
    weights = [spec.weights[name] for name in spec.active]
    m = len(idx)
    factor = 1.0 + spec.epsilon
    eps = spec.epsilon
    view = _EdgeView(graph, spec.hard, spec)
    hcache: dict[int, float] = {}

    def h_dist(u):
        h = hcache.get(u)
        if h is None:
            h = hcache[u] = graph.dist_lower_bound(u, end) * H_SHRINK
        return h

    def f_of(label):
        f = list(label.apex)
        f[0] += h_dist(label.node)  # dist is always the first active objective
        return tuple(f)

    counter = itertools.count()
    heap: list = []
    open_at: dict[int, list[_Label]] = {}
    closed_at: dict[int, list[tuple]] = {}
    solutions: list[_Label] = []
    stored = 0

    def covered_by_solution(f) -> bool:
        for s in solutions:
            if _weakly_le(s.rep, f) or eps_dominates(s.rep, f, None, eps):
                return True
        return False

    def push(label):
        nonlocal stored
        stored += 1
        if stored > spec.max_labels:
            raise SearchBudgetExceeded(
                f"pareto search stored more than {spec.max_labels} labels between nodes {start} and {end}"
            )
        f = f_of(label)
        scal = 0.0
        for w, x in zip(weights, f):
            scal += w * x
        heapq.heappush(heap, (scal, f, label.node, next(counter), label))

    def insert(new: _Label):
        v = new.node
        for apex in closed_at.get(v, ()):
            if _weakly_le(apex, new.apex):
                return
        if covered_by_solution(f_of(new)):
            return
        bucket = open_at.setdefault(v, [])
        for other in bucket:
            if _weakly_le(other.apex, new.apex):
                return
        keep = []
        for other in bucket:
            if _weakly_le(new.apex, other.apex):
                other.alive = False
            else:
                keep.append(other)
        bucket[:] = keep
        if eps > 0:
            for i, other in enumerate(bucket):
                apex = tuple(min(a, b) for a, b in zip(other.apex, new.apex))
                bound = tuple(factor * a for a in apex)
                best = None
                for cand in (other, new):
                    if _weakly_le(cand.rep, bound):
                        if best is None or _scal(weights, cand.rep) < _scal(weights, best.rep):
                            best = cand
                if best is not None:
                    other.alive = False
                    merged = _Label(v, apex, best.rep, best.cost, best.trail)
                    bucket[i] = merged
                    push(merged)
                    return
        bucket.append(new)
        push(new)

    zero = (0.0,) * m
    insert(_Label(start, zero, zero, ZERO_COST, (start, None)))
    while heap:
        *_, label = heapq.heappop(heap)
        if not label.alive:
            continue
        u = label.node
        label.alive = False
        bucket = open_at.get(u)
        if bucket is not None and label in bucket:
            bucket.remove(label)
        if any(_weakly_le(apex, label.apex) for apex in closed_at.get(u, ())):
            continue
        if covered_by_solution(f_of(label)):
            continue
        closed_at.setdefault(u, []).append(label.apex)
        if u == end:
            solutions.append(label)
            continue
        for v, cost, _ in view.out(u):
            step = tuple(cost[i] for i in idx)
            insert(_Label(
                v,
                tuple(a + c for a, c in zip(label.apex, step)),
                tuple(a + c for a, c in zip(label.rep, step)),
                CostVector(*(a + c for a, c in zip(label.cost, cost))),
                (v, label.trail),
            ))
    if not solutions:
        raise _unreachable(graph, start, end, spec.hard)
    routes = tuple(Route(s.path(), s.cost) for s in solutions)
    return ParetoSet(routes, spec.active, spec.epsilon, stored)


def _scal(weights, vec):
    s = 0.0
    for w, x in zip(weights, vec):
        s += w * x
    return s


def _rank_key(spec: SearchSpec, route: Route):
    return (spec.scalarize(route.cost), route.cost.dist, tuple(route.cost), route.path)


def top_k(pset: ParetoSet | Sequence[Route], spec: SearchSpec) -> list[Route]:
    """Up to ``spec.k`` routes, best scalarized score first (ties: dist, then cost)."""
    routes = pset.solutions if isinstance(pset, ParetoSet) else tuple(pset)
    return sorted(routes, key=lambda r: _rank_key(spec, r))[: spec.k]


def search_routes(graph: RouteGraph, start: int, end: int, spec: SearchSpec, scalarized: bool = False) -> list[Route]:
    """Ranked alternatives for one segment: weighted A* when a single
    objective is active (or ``scalarized``), otherwise Pareto search + top-k."""
    if scalarized or len(spec.active) == 1:
        return [shortest_path(graph, start, end, spec)]
    return top_k(pareto_search(graph, start, end, spec), spec)
