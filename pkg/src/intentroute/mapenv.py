"""Routable environments with six-attribute edge costs.

Two modes share one in-memory type and one JSON format:

* ``grid``: a width x height lattice with 8-directional connectivity, node
  index ``y * width + x``, ``dist`` equal to the geometric step length.
* ``free``: an arbitrary embedded graph with explicit node coordinates
  (used for externally prepared street networks).

Edges are undirected; each is stored once with ``u < v`` and mirrored in the
adjacency lists.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

OBJECTIVES = ("dist", "scenic", "energy", "danger", "slope", "toll")
ATTRIBUTES = OBJECTIVES[1:]
FORMAT_VERSION = 1
SQRT2 = math.sqrt(2.0)

BASE_RANGE = (0.05, 0.15)
ZONE_RANGE = (0.85, 0.95)
DEFAULT_ZONE_COUNTS = {attr: 3 for attr in ATTRIBUTES}
DEFAULT_BLOCK_FRACTION = 0.02

# grid neighbours with a larger node index, so every undirected edge is
# enumerated exactly once
_FORWARD_STEPS = ((1, 0), (-1, 1), (0, 1), (1, 1))


class MapError(ValueError):
    """Invalid map parameters, document, or graph invariant."""


class CostVector(NamedTuple):
    """Objective costs in the fixed global order ``OBJECTIVES``."""

    dist: float = 0.0
    scenic: float = 0.0
    energy: float = 0.0
    danger: float = 0.0
    slope: float = 0.0
    toll: float = 0.0

    def plus(self, other: Sequence[float]) -> "CostVector":
        return CostVector(*(a + b for a, b in zip(self, other)))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(OBJECTIVES, self))

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "CostVector":
        return cls(*(float(data[name]) for name in OBJECTIVES))


ZERO_COST = CostVector()


class Edge(NamedTuple):
    cost: CostVector
    passable: bool = True


@dataclass(frozen=True)
class CostZone:
    """Polygonal region overriding one attribute (high ~0.9 or low ~0.1)."""

    attribute: str
    polygon: tuple[tuple[float, float], ...]
    level: str = "high"

    def __post_init__(self):
        if self.attribute not in ATTRIBUTES:
            raise MapError(f"zone attribute {self.attribute!r} is not a map attribute")
        if self.level not in ("high", "low"):
            raise MapError(f"zone level must be 'high' or 'low', got {self.level!r}")
        if len(self.polygon) < 3:
            raise MapError("zone polygon needs at least 3 vertices")
        object.__setattr__(self, "polygon", tuple((float(x), float(y)) for x, y in self.polygon))

    def contains(self, x: float, y: float) -> bool:
        return point_in_polygon(x, y, self.polygon)


def point_in_polygon(x: float, y: float, polygon: Sequence[tuple[float, float]]) -> bool:
    """Even-odd rule membership test."""
    inside = False
    n = len(polygon)
    j = n - 1
    for i in range(n):
        xi, yi = polygon[i]
        xj, yj = polygon[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def octile(a: Sequence[float], b: Sequence[float]) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


@dataclass(frozen=True, eq=False)
class RouteGraph:
    """Immutable graph with per-edge cost vectors.

    ``edges`` maps ``(u, v)`` with ``u < v`` to an :class:`Edge`. Construction
    validates every invariant and raises :class:`MapError` naming the
    offending node or edge.
    """

    mode: str
    coords: tuple[tuple[float, float], ...]
    edges: Mapping[tuple[int, int], Edge]
    width: int | None = None
    height: int | None = None
    seed: int | None = None
    zones: tuple[CostZone, ...] = field(default=())

    def __post_init__(self):
        self._validate()
        adj: list[list[tuple[int, CostVector]]] = [[] for _ in self.coords]
        for (u, v), edge in self.edges.items():
            if edge.passable:
                adj[u].append((v, edge.cost))
                adj[v].append((u, edge.cost))
        for lst in adj:
            lst.sort(key=lambda item: item[0])
        object.__setattr__(self, "_adj", tuple(tuple(lst) for lst in adj))
        object.__setattr__(self, "_lb_scale", self._compute_lb_scale())
        self._check_connected()

    # -- invariants -------------------------------------------------------
    def _validate(self):
        if self.mode not in ("grid", "free"):
            raise MapError(f"unknown map mode {self.mode!r}")
        n = len(self.coords)
        if n == 0:
            raise MapError("map has no nodes")
        if self.mode == "grid":
            if not self.width or not self.height or self.width < 1 or self.height < 1:
                raise MapError("grid maps need positive width and height")
            if self.width * self.height != n:
                raise MapError("grid node count does not match width*height")
        for (u, v), edge in self.edges.items():
            where = f"edge ({u}, {v})"
            if not (0 <= u < n) or not (0 <= v < n):
                missing = v if 0 <= u < n else u
                raise MapError(f"{where}: endpoint {missing} does not exist")
            if u >= v:
                raise MapError(f"{where}: endpoints must satisfy u < v")
            cost = edge.cost
            if any(not math.isfinite(c) or c < 0 for c in cost):
                raise MapError(f"{where}: costs must be finite and non-negative")
            if any(c > 1.0 for c in cost[1:]):
                raise MapError(f"{where}: attribute costs must lie in [0, 1]")
            if self.mode == "grid":
                ux, uy = self.coords[u]
                vx, vy = self.coords[v]
                if max(abs(ux - vx), abs(uy - vy)) != 1:
                    raise MapError(f"{where}: grid edges must join 8-neighbours")

    def _check_connected(self):
        seen = _flood(len(self.coords), self._adj, 0)
        if len(seen) != len(self.coords):
            lost = min(set(range(len(self.coords))) - seen)
            raise MapError(f"passable subgraph is disconnected (node {lost} unreachable from node 0)")

    def _compute_lb_scale(self) -> float:
        if self.mode == "grid":
            return 1.0
        # largest s with dist(e) >= s * euclid(e) on every edge keeps
        # s * euclid(u, v) an admissible bound on the dist of any u-v path
        scale = math.inf
        for (u, v), edge in self.edges.items():
            length = math.dist(self.coords[u], self.coords[v])
            if length > 0:
                scale = min(scale, edge.cost.dist / length)
        return 0.0 if scale == math.inf else scale

    # -- queries ----------------------------------------------------------
    @property
    def num_nodes(self) -> int:
        return len(self.coords)

    def __contains__(self, node: int) -> bool:
        return isinstance(node, (int, np.integer)) and 0 <= node < len(self.coords)

    def neighbors(self, node: int) -> tuple[tuple[int, CostVector], ...]:
        """Passable neighbours of ``node`` in ascending index order."""
        if node not in self:
            raise KeyError(f"unknown node {node}")
        return self._adj[node]

    def edge(self, u: int, v: int) -> Edge:
        key = (u, v) if u < v else (v, u)
        try:
            return self.edges[key]
        except KeyError:
            raise KeyError(f"no edge between {u} and {v}") from None

    def node_at(self, x: float, y: float) -> int:
        """Node with exactly these coordinates (grid) or the nearest one (free)."""
        if self.mode == "grid":
            xi, yi = int(round(x)), int(round(y))
            if xi != x or yi != y or not (0 <= xi < self.width and 0 <= yi < self.height):
                raise KeyError(f"({x}, {y}) is not a node of the {self.width}x{self.height} grid")
            return yi * self.width + xi
        best = min(range(len(self.coords)), key=lambda i: (math.dist(self.coords[i], (x, y)), i))
        return best

    def octile(self, u: int, v: int) -> float:
        return octile(self.coords[u], self.coords[v])

    def dist_lower_bound(self, u: int, v: int) -> float:
        """Admissible lower bound on the dist cost of any u-v path."""
        if self.mode == "grid":
            return octile(self.coords[u], self.coords[v])
        return self._lb_scale * math.dist(self.coords[u], self.coords[v])

    def __eq__(self, other):
        if not isinstance(other, RouteGraph):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.width == other.width
            and self.height == other.height
            and self.seed == other.seed
            and self.coords == other.coords
            and dict(self.edges) == dict(other.edges)
        )

    __hash__ = None


def neighbors(graph: RouteGraph, node: int) -> tuple[tuple[int, CostVector], ...]:
    return graph.neighbors(node)


def _flood(n, adj, source) -> set[int]:
    seen = {source}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def passable_connected(num_nodes: int, passable_edges: Iterable[tuple[int, int]]) -> bool:
    adj: list[list[tuple[int, None]]] = [[] for _ in range(num_nodes)]
    for u, v in passable_edges:
        adj[u].append((v, None))
        adj[v].append((u, None))
    return len(_flood(num_nodes, adj, 0)) == num_nodes


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def grid_edge_list(width: int, height: int) -> list[tuple[int, int]]:
    pairs = []
    for y in range(height):
        for x in range(width):
            u = y * width + x
            for dx, dy in _FORWARD_STEPS:
                nx, ny = x + dx, y + dy
                if 0 <= nx < width and 0 <= ny < height:
                    pairs.append((u, ny * width + nx))
    pairs.sort()
    return pairs


def random_zone(rng: np.random.Generator, attribute: str, width: int, height: int) -> CostZone:
    """Star-shaped polygon with 3-8 vertices, shrunk radially to fit the grid."""
    xmax, ymax = width - 1, height - 1
    cx = float(rng.uniform(0, xmax))
    cy = float(rng.uniform(0, ymax))
    n = int(rng.integers(3, 9))
    angles = np.sort(rng.uniform(0.0, 2 * math.pi, size=n))
    rmax = max(2.0, min(width, height) / 4.0)
    radii = rng.uniform(0.4 * rmax, rmax, size=n)
    pts = []
    for ang, r in zip(angles, radii):
        dx, dy = math.cos(ang), math.sin(ang)
        limit = r
        if dx > 1e-12:
            limit = min(limit, (xmax - cx) / dx)
        elif dx < -1e-12:
            limit = min(limit, -cx / dx)
        if dy > 1e-12:
            limit = min(limit, (ymax - cy) / dy)
        elif dy < -1e-12:
            limit = min(limit, -cy / dy)
        px = min(max(cx + limit * dx, 0.0), xmax)
        py = min(max(cy + limit * dy, 0.0), ymax)
        pts.append((round(px, 4), round(py, 4)))
    return CostZone(attribute, tuple(pts), "high")


def generate_grid_map(
    width: int = 50,
    height: int = 30,
    seed: int = 0,
    zones: Mapping[str, int] | Sequence[CostZone] | None = None,
    block_fraction: float = DEFAULT_BLOCK_FRACTION,
) -> RouteGraph:
    """Build a seeded synthetic grid map.

    ``zones`` is either a per-attribute zone count (random polygons) or an
    explicit sequence of :class:`CostZone`, applied in order so later zones
    override earlier ones. Edge membership uses the edge midpoint.
    """
    if width < 1 or height < 1 or width * height < 4:
        raise MapError("grid needs width*height >= 4")
    if not 0.0 <= block_fraction <= 0.05:
        raise MapError("block_fraction must lie in [0, 0.05]")

    rng = np.random.default_rng(seed)
    if zones is None:
        zones = DEFAULT_ZONE_COUNTS
    if isinstance(zones, Mapping):
        unknown = set(zones) - set(ATTRIBUTES)
        if unknown:
            raise MapError(f"unknown zone attributes: {sorted(unknown)}")
        zone_list = [
            random_zone(rng, attr, width, height)
            for attr in ATTRIBUTES
            for _ in range(int(zones.get(attr, 0)))
        ]
    else:
        zone_list = list(zones)
        for zone in zone_list:
            for x, y in zone.polygon:
                if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
                    raise MapError(f"zone vertex ({x}, {y}) lies outside the {width}x{height} grid")

    coords = tuple((x, y) for y in range(height) for x in range(width))
    pairs = grid_edge_list(width, height)
    m = len(pairs)
    values = rng.uniform(*BASE_RANGE, size=(m, len(ATTRIBUTES)))
    mids = np.array(
        [((coords[u][0] + coords[v][0]) / 2.0, (coords[u][1] + coords[v][1]) / 2.0) for u, v in pairs]
    )
    for zone in zone_list:
        col = ATTRIBUTES.index(zone.attribute)
        mask = np.array([zone.contains(x, y) for x, y in mids], dtype=bool)
        lo, hi = ZONE_RANGE if zone.level == "high" else BASE_RANGE
        values[mask, col] = rng.uniform(lo, hi, size=int(mask.sum()))
    values = np.round(np.clip(values, 0.0, 1.0), 6)

    blocked = _choose_blocked(rng, len(coords), pairs, block_fraction)

    edges = {}
    for i, (u, v) in enumerate(pairs):
        (ux, uy), (vx, vy) = coords[u], coords[v]
        dist = 1.0 if (ux == vx or uy == vy) else SQRT2
        cost = CostVector(dist, *(float(c) for c in values[i]))
        edges[(u, v)] = Edge(cost, i not in blocked)
    return RouteGraph("grid", coords, edges, width, height, seed, tuple(zone_list))


def _choose_blocked(rng, num_nodes, pairs, block_fraction) -> set[int]:
    target = int(round(block_fraction * len(pairs)))
    if target == 0:
        return set()
    adj = [set() for _ in range(num_nodes)]
    for i, (u, v) in enumerate(pairs):
        adj[u].add(v)
        adj[v].add(u)
    blocked: set[int] = set()
    failures = 0
    budget = 10 * target
    while len(blocked) < target:
        i = int(rng.integers(len(pairs)))
        if i in blocked:
            continue
        u, v = pairs[i]
        adj[u].discard(v)
        adj[v].discard(u)
        if _reaches(adj, u, v):
            blocked.add(i)
        else:
            adj[u].add(v)
            adj[v].add(u)
            failures += 1
            if failures > budget:
                raise MapError(
                    f"could not block {target} edges without disconnecting the map "
                    f"({failures} rejected samples)"
                )
    return blocked


def _reaches(adj, source, target) -> bool:
    # removing edge (u, v) keeps the graph connected iff v is still reachable from u
    seen = {source}
    queue = deque([source])
    while queue:
        x = queue.popleft()
        if x == target:
            return True
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                queue.append(y)
    return False


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _round(x: float) -> float:
    return round(float(x), 6)


def map_to_dict(graph: RouteGraph) -> dict:
    doc = {
        "mode": graph.mode,
        "seed": graph.seed,
        "version": FORMAT_VERSION,
        "edges": [
            {
                "u": u,
                "v": v,
                "passable": edge.passable,
                "cost": {name: _round(c) for name, c in zip(OBJECTIVES, edge.cost)},
            }
            for (u, v), edge in sorted(graph.edges.items())
        ],
    }
    if graph.mode == "grid":
        doc["width"] = graph.width
        doc["height"] = graph.height
    else:
        doc["nodes"] = [{"id": i, "x": x, "y": y} for i, (x, y) in enumerate(graph.coords)]
    return doc


def save_map(graph: RouteGraph) -> bytes:
    text = json.dumps(map_to_dict(graph), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def load_map(data: bytes | str) -> RouteGraph:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MapError(f"map document is not valid JSON: {exc}") from None
    return map_from_dict(doc)


def map_from_dict(doc) -> RouteGraph:
    if not isinstance(doc, dict):
        raise MapError("map document must be a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise MapError(f"unsupported map version {doc.get('version')!r}")
    mode = doc.get("mode")
    seed = doc.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise MapError("seed must be an integer or null")
    if mode == "grid":
        width, height = doc.get("width"), doc.get("height")
        if not isinstance(width, int) or not isinstance(height, int) or width < 1 or height < 1:
            raise MapError("grid maps need integer width and height >= 1")
        coords = tuple((x, y) for y in range(height) for x in range(width))
    elif mode == "free":
        width = height = None
        nodes = doc.get("nodes")
        if not isinstance(nodes, list) or not nodes:
            raise MapError("free maps need a non-empty 'nodes' list")
        by_id = {}
        for i, node in enumerate(nodes):
            try:
                nid, x, y = node["id"], float(node["x"]), float(node["y"])
            except (KeyError, TypeError, ValueError):
                raise MapError(f"nodes[{i}]: needs integer 'id' and numeric 'x', 'y'") from None
            if not isinstance(nid, int) or nid in by_id:
                raise MapError(f"nodes[{i}]: id {nid!r} is not a unique integer")
            by_id[nid] = (x, y)
        if sorted(by_id) != list(range(len(by_id))):
            raise MapError("node ids must be exactly 0..n-1")
        coords = tuple(by_id[i] for i in range(len(by_id)))
    else:
        raise MapError(f"unknown map mode {mode!r}")

    raw_edges = doc.get("edges")
    if not isinstance(raw_edges, list):
        raise MapError("map document needs an 'edges' list")
    edges = {}
    n = len(coords)
    for i, item in enumerate(raw_edges):
        try:
            u, v = item["u"], item["v"]
            passable = item["passable"]
            cost = CostVector.from_mapping(item["cost"])
        except (KeyError, TypeError, ValueError):
            raise MapError(f"edges[{i}]: needs 'u', 'v', 'passable' and a full 'cost' object") from None
        if not isinstance(u, int) or not isinstance(v, int) or not isinstance(passable, bool):
            raise MapError(f"edges[{i}]: 'u'/'v' must be integers and 'passable' a boolean")
        for end in (u, v):
            if not 0 <= end < n:
                raise MapError(f"edges[{i}] ({u}, {v}): endpoint {end} does not exist")
        if u > v:
            u, v = v, u
        if (u, v) in edges:
            raise MapError(f"edges[{i}] ({u}, {v}): duplicate edge")
        if mode == "grid":
            (ux, uy), (vx, vy) = coords[u], coords[v]
            step = 1.0 if (ux == vx or uy == vy) else SQRT2
            if abs(cost.dist - step) > 1e-6:
                raise MapError(f"edges[{i}] ({u}, {v}): dist {cost.dist} is not the grid step length")
            cost = cost._replace(dist=step)
        edges[(u, v)] = Edge(cost, passable)
    try:
        return RouteGraph(mode, coords, edges, width, height, seed)
    except MapError as exc:
        raise MapError(str(exc)) from None
