"""Typed points of interest: synthesis, attribute filtering, ranking and
stop ordering."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .mapenv import RouteGraph, octile

CATALOG_VERSION = 1
CUISINES = ("Chinese", "American", "Italian", "Mexican", "Indian", "Mediterranean", "French")
CATEGORY_COUNTS = {"restaurant": 20, "coffee_shop": 15, "gym": 10, "park": 5}
CATEGORIES = tuple(CATEGORY_COUNTS)
ID_PREFIX = {"restaurant": "R", "coffee_shop": "C", "gym": "G", "park": "P"}

# field -> kind; kinds: enum, rating, int, bool, hours
SCHEMAS: dict[str, dict[str, str]] = {
    "restaurant": {
        "cuisine": "enum",
        "rating": "rating",
        "average_cost": "int",
        "is_vegetarian_friendly": "bool",
        "opening_hours": "hours",
    },
    "coffee_shop": {
        "is_work_friendly": "bool",
        "average_cost": "int",
        "rating": "rating",
        "opening_hours": "hours",
    },
    "gym": {
        "rating": "rating",
        "average_cost": "int",
        "has_swimming_pool": "bool",
        "opening_hours": "hours",
    },
    "park": {
        "has_entry_fee": "bool",
        "rating": "rating",
        "opening_hours": "hours",
    },
}
ENUM_VALUES = {"cuisine": CUISINES}

OPS_BY_KIND = {
    "enum": ("eq", "contains"),
    "rating": ("eq", "ge", "le"),
    "int": ("eq", "ge", "le"),
    "bool": ("eq",),
    "hours": ("open_at", "contains"),
}
FILTER_OPS = ("eq", "ge", "le", "contains", "open_at")

COST_RANGE = {"restaurant": (15, 120), "coffee_shop": (4, 15), "gym": (10, 60)}
HOURS_POOL = {
    "restaurant": ("11:00-22:00", "11:30-23:00", "12:00-21:30", "17:00-23:30", "10:00-22:00", "18:00-02:00"),
    "coffee_shop": ("06:30-18:00", "07:00-19:00", "07:00-21:00", "08:00-17:00", "06:00-15:00"),
    "gym": ("06:00-22:00", "05:00-23:00", "00:00-24:00", "07:00-21:00", "06:00-20:00"),
    "park": ("05:30-19:30", "06:00-22:00", "00:00-24:00", "07:00-20:00"),
}
NAME_WORDS = {
    "restaurant": (("Golden", "Blue", "Corner", "Olive", "Red", "Little", "Grand", "Harbor"),
                   ("Kitchen", "Bistro", "Table", "Diner", "Trattoria", "House", "Grill")),
    "coffee_shop": (("Morning", "Bean", "Quiet", "Velvet", "Copper", "Daily"),
                    ("Roasters", "Cafe", "Espresso Bar", "Coffee Co.", "Brew")),
    "gym": (("Iron", "Peak", "Core", "Urban", "Summit"), ("Fitness", "Gym", "Athletics", "Studio")),
    "park": (("Willow", "River", "Maple", "Sunset", "Cedar"), ("Park", "Gardens", "Green", "Commons")),
}


class PoiError(ValueError):
    """Schema violation or incompatible filter."""


def parse_hours(text: str) -> tuple[int, int]:
    """``"HH:MM-HH:MM"`` -> (open, close) in minutes; ``24:00`` allowed as a close time."""
    try:
        start, end = text.split("-")
        return _parse_time(start, allow_24=False), _parse_time(end, allow_24=True)
    except (ValueError, AttributeError):
        raise PoiError(f"opening hours {text!r} are not 'HH:MM-HH:MM'") from None


def _parse_time(text: str, allow_24: bool = False) -> int:
    hh, mm = text.split(":")
    if len(hh) != 2 or len(mm) != 2 or not (hh.isdigit() and mm.isdigit()):
        raise ValueError(text)
    h, m = int(hh), int(mm)
    if m > 59 or h > 24 or (h == 24 and (m != 0 or not allow_24)):
        raise ValueError(text)
    return h * 60 + m


def parse_time_of_day(text: str) -> int:
    try:
        return _parse_time(text)
    except (ValueError, AttributeError):
        raise PoiError(f"time {text!r} is not 'HH:MM'") from None


def is_open(hours: str, minute: int) -> bool:
    """Half-open interval [open, close); overnight ranges wrap midnight."""
    start, end = parse_hours(hours)
    if start == end:
        return False
    if start < end:
        return start <= minute < end
    return minute >= start or minute < end


@dataclass(frozen=True)
class PoiRecord:
    id: str
    category: str
    node: int
    name: str
    attrs: Mapping[str, Any] = field(hash=False)

    def __post_init__(self):
        check_record(self)

    def to_dict(self) -> dict:
        return {"id": self.id, "category": self.category, "node": self.node,
                "name": self.name, "attrs": dict(self.attrs)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PoiRecord":
        try:
            return cls(data["id"], data["category"], data["node"], data["name"], dict(data["attrs"]))
        except (KeyError, TypeError) as exc:
            raise PoiError(f"malformed POI record: {exc}") from None


def check_record(rec: PoiRecord):
    schema = SCHEMAS.get(rec.category)
    if schema is None:
        raise PoiError(f"{rec.id}: unknown category {rec.category!r}")
    if set(rec.attrs) != set(schema):
        raise PoiError(f"{rec.id}: attrs must be exactly {sorted(schema)}, got {sorted(rec.attrs)}")
    for name, kind in schema.items():
        value = rec.attrs[name]
        if kind == "enum" and value not in ENUM_VALUES[name]:
            raise PoiError(f"{rec.id}: {name}={value!r} not in {ENUM_VALUES[name]}")
        if kind == "rating":
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 5.0:
                raise PoiError(f"{rec.id}: rating {value!r} outside [0.0, 5.0]")
            if round(value, 1) != value:
                raise PoiError(f"{rec.id}: rating {value!r} must have one decimal")
        if kind == "int" and (isinstance(value, bool) or not isinstance(value, int) or value <= 0):
            raise PoiError(f"{rec.id}: {name} must be a positive integer")
        if kind == "bool" and not isinstance(value, bool):
            raise PoiError(f"{rec.id}: {name} must be boolean")
        if kind == "hours":
            parse_hours(value)


@dataclass(frozen=True)
class AttrFilter:
    field: str
    op: str
    value: Any

    def to_dict(self) -> dict:
        return {"field": self.field, "op": self.op, "value": self.value}


def check_filter(category: str, flt: AttrFilter):
    """Raise :class:`PoiError` unless ``flt`` type-checks against the category schema."""
    schema = SCHEMAS.get(category)
    if schema is None:
        raise PoiError(f"unknown category {category!r}")
    kind = schema.get(flt.field)
    if kind is None:
        raise PoiError(f"{category} has no attribute {flt.field!r}")
    if flt.op not in OPS_BY_KIND[kind]:
        raise PoiError(f"op {flt.op!r} is not valid for {category}.{flt.field}")
    value = flt.value
    if flt.op == "open_at":
        parse_time_of_day(value)
    elif flt.op == "contains":
        if not isinstance(value, str):
            raise PoiError(f"'contains' on {flt.field} needs a string value")
    elif kind == "enum":
        if value not in ENUM_VALUES[flt.field]:
            raise PoiError(f"{flt.field} value {value!r} not in {ENUM_VALUES[flt.field]}")
    elif kind in ("rating", "int"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PoiError(f"{flt.field} needs a numeric value")
    elif kind == "bool" and not isinstance(value, bool):
        raise PoiError(f"{flt.field} needs a boolean value")


def matches(rec: PoiRecord, flt: AttrFilter) -> bool:
    value = rec.attrs[flt.field]
    if flt.op == "eq":
        return value == flt.value
    if flt.op == "ge":
        return value >= flt.value
    if flt.op == "le":
        return value <= flt.value
    if flt.op == "contains":
        return flt.value.casefold() in str(value).casefold()
    if flt.op == "open_at":
        return is_open(value, parse_time_of_day(flt.value))
    raise PoiError(f"unknown op {flt.op!r}")


def filter_pois(catalog: Sequence[PoiRecord], category: str, filters: Sequence[AttrFilter] = ()) -> list[PoiRecord]:
    """Records of ``category`` satisfying every filter, in catalog order."""
    for flt in filters:
        check_filter(category, flt)
    return [rec for rec in catalog if rec.category == category and all(matches(rec, f) for f in filters)]


def detour(graph: RouteGraph, node: int, a: int, b: int) -> float:
    return graph.octile(a, node) + graph.octile(node, b) - graph.octile(a, b)


def rank(candidates: Sequence[PoiRecord], anchor_a: int, anchor_b: int, graph: RouteGraph) -> list[PoiRecord]:
    """Best rating first; ties go to the smaller octile detour between the
    anchors, then to the smaller id."""
    return sorted(
        candidates,
        key=lambda rec: (-rec.attrs["rating"], detour(graph, rec.node, anchor_a, anchor_b), rec.id),
    )


class TooManyStops(ValueError):
    pass


def order_stops(
    start,
    end,
    stops: Sequence,
    fixed_positions: Mapping[int, int] | None = None,
    key: Callable[[Any], Sequence[float]] = lambda p: p,
    max_free: int = 6,
) -> list:
    """Order ``stops`` between ``start`` and ``end`` to minimise the octile
    tour length.

    ``fixed_positions`` pins ``stops[i]`` to visit position ``p`` (0-based
    among the stops); only the remaining stops are permuted. Returns
    ``[start, *ordered_stops, end]``.
    """
    fixed = dict(fixed_positions or {})
    n = len(stops)
    for i, pos in fixed.items():
        if not (0 <= i < n and 0 <= pos < n):
            raise ValueError(f"fixed position {pos} for stop {i} is out of range")
    if len(set(fixed.values())) != len(fixed):
        raise ValueError("two stops pinned to the same position")
    free_stops = [i for i in range(n) if i not in fixed]
    free_slots = [p for p in range(n) if p not in fixed.values()]
    if len(free_stops) > max_free:
        raise TooManyStops(f"{len(free_stops)} free stops exceed the permutation budget of {max_free}")

    pts = [key(s) for s in stops]
    p_start, p_end = key(start), key(end)
    best_len = None
    best_seq = None
    for perm in itertools.permutations(free_stops):
        seq = [0] * n
        for i, pos in fixed.items():
            seq[pos] = i
        for slot, i in zip(free_slots, perm):
            seq[slot] = i
        length = 0.0
        prev = p_start
        for i in seq:
            length += octile(prev, pts[i])
            prev = pts[i]
        length += octile(prev, p_end)
        if best_len is None or length < best_len:
            best_len, best_seq = length, seq
    return [start, *(stops[i] for i in best_seq), end]


# ---------------------------------------------------------------------------
# synthesis and serialization
# ---------------------------------------------------------------------------

def _rating(rng) -> float:
    return float(round(min(5.0, max(0.0, rng.normal(4.0, 0.5))), 1))


def generate_pois(graph: RouteGraph, seed: int = 0) -> list[PoiRecord]:
    """50 POIs (20/15/10/5 by category) on distinct uniformly sampled nodes."""
    total = sum(CATEGORY_COUNTS.values())
    if graph.num_nodes < total:
        raise PoiError(f"graph has {graph.num_nodes} nodes; need at least {total}")
    rng = np.random.default_rng(seed)
    nodes = [int(n) for n in rng.choice(graph.num_nodes, size=total, replace=False)]
    records = []
    it = iter(nodes)
    for category, count in CATEGORY_COUNTS.items():
        first, second = NAME_WORDS[category]
        for k in range(count):
            attrs: dict[str, Any] = {}
            for name, kind in SCHEMAS[category].items():
                if kind == "enum":
                    attrs[name] = CUISINES[int(rng.integers(len(CUISINES)))]
                elif kind == "rating":
                    attrs[name] = _rating(rng)
                elif kind == "int":
                    lo, hi = COST_RANGE[category]
                    attrs[name] = int(rng.integers(lo, hi + 1))
                elif kind == "bool":
                    attrs[name] = bool(rng.random() < 0.5)
                elif kind == "hours":
                    pool = HOURS_POOL[category]
                    attrs[name] = pool[int(rng.integers(len(pool)))]
            name = f"{first[int(rng.integers(len(first)))]} {second[int(rng.integers(len(second)))]} {k + 1}"
            records.append(PoiRecord(f"{ID_PREFIX[category]}{k + 1:02d}", category, next(it), name, attrs))
    return records


def save_catalog(pois: Sequence[PoiRecord], seed: int | None = None) -> bytes:
    doc = {"pois": [p.to_dict() for p in pois], "seed": seed, "version": CATALOG_VERSION}
    return (json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def load_catalog(data: bytes | str, graph: RouteGraph | None = None) -> list[PoiRecord]:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PoiError(f"catalog is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != CATALOG_VERSION:
        raise PoiError("catalog must be an object with version 1")
    pois = [PoiRecord.from_dict(item) for item in doc.get("pois", [])]
    ids = [p.id for p in pois]
    if len(set(ids)) != len(ids):
        raise PoiError("duplicate POI ids in catalog")
    if graph is not None:
        for p in pois:
            if p.node not in graph:
                raise PoiError(f"{p.id}: node {p.node} is not in the map")
    return pois
