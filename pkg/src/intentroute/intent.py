"""Structured intent schema shared by every parser backend and planner stage.

Documents are UTF-8 JSON; the machine-readable schema ships as
``data/intent_schema.json``. :func:`validate` performs the authoritative
check and reports every violation with a dotted path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping

from .mapenv import ATTRIBUTES, OBJECTIVES
from .poicatalog import CATEGORIES, AttrFilter, PoiError, check_filter

INTENT_VERSION = 1
PREF_LEVELS = (0, 0.5, 1)
CONSTRAINT_KINDS = ("avoid_attr_above", "require_attr_below", "forbid_edges")
GLOBAL_METRICS = ("total_dist", "total_time", "total_budget")
SPECIAL_MODES = ("info", "modify")
IMPLIED_CUTOFF = 0.5

Point = tuple[float, float]


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


class IntentValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class PoiRequirement:
    category: str
    filters: tuple[AttrFilter, ...] = ()
    alternatives: tuple["PoiRequirement", ...] | None = None
    fixed_position: int | None = None

    def options(self) -> tuple["PoiRequirement", ...]:
        """This requirement and its OR-alternatives; exactly one is visited."""
        return (self, *(self.alternatives or ()))

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "filters": [f.to_dict() for f in self.filters],
            "alternatives": None if self.alternatives is None else [a.to_dict() for a in self.alternatives],
            "fixed_position": self.fixed_position,
        }


@dataclass(frozen=True)
class HardPathConstraint:
    kind: str
    attribute: str | None = None
    threshold: float | None = None
    edges: tuple[tuple[Point, Point], ...] = ()

    def to_dict(self) -> dict:
        if self.kind == "forbid_edges":
            return {"kind": self.kind, "edges": [[list(a), list(b)] for a, b in self.edges]}
        return {"kind": self.kind, "attribute": self.attribute, "threshold": self.threshold}


def avoid_above(attribute: str, threshold: float) -> HardPathConstraint:
    return HardPathConstraint("avoid_attr_above", attribute, float(threshold))


@dataclass(frozen=True)
class PreferenceVector:
    weights: Mapping[str, float] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        full = {name: 0 for name in OBJECTIVES}
        for k, v in dict(self.weights).items():
            if k not in full:
                raise ValueError(f"unknown preference feature {k!r}")
            if v not in PREF_LEVELS:
                raise ValueError(f"preference {k}={v!r} not in {{0, 0.5, 1}}")
            full[k] = _level(v)
        object.__setattr__(self, "weights", full)

    def __getitem__(self, name: str) -> float:
        return self.weights[name]

    def nonzero(self) -> dict[str, float]:
        return {k: v for k, v in self.weights.items() if v}

    def to_dict(self) -> dict:
        return dict(self.weights)


def _level(v):
    return 0.5 if v == 0.5 else int(v)


@dataclass(frozen=True)
class SpecialRequirement:
    topic: str
    mode: str
    payload: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def hard_constraints(self) -> tuple[HardPathConstraint, ...]:
        return tuple(_constraint_from(c) for c in self.payload.get("hard_constraints", ()))

    def poi_filters(self) -> tuple[tuple[str, AttrFilter], ...]:
        return tuple(
            (f["category"], AttrFilter(f["field"], f["op"], f["value"]))
            for f in self.payload.get("poi_filters", ())
        )

    def to_dict(self) -> dict:
        return {"topic": self.topic, "mode": self.mode, "payload": _plain(self.payload)}


@dataclass(frozen=True)
class GlobalConstraint:
    metric: str
    threshold: float
    critical: bool = False

    def to_dict(self) -> dict:
        return {"metric": self.metric, "threshold": self.threshold, "critical": self.critical}


@dataclass(frozen=True)
class ParsedIntent:
    start: Point
    end: Point
    poi_stops: tuple[PoiRequirement, ...] = ()
    hard_constraints: tuple[HardPathConstraint, ...] = ()
    soft_prefs: PreferenceVector = field(default_factory=PreferenceVector)
    specials: tuple[SpecialRequirement, ...] = ()
    globals: tuple[GlobalConstraint, ...] = ()
    loop: bool = False

    def to_dict(self) -> dict:
        return {
            "version": INTENT_VERSION,
            "start": list(self.start),
            "end": list(self.end),
            "loop": self.loop,
            "poi_stops": [s.to_dict() for s in self.poi_stops],
            "hard_constraints": [c.to_dict() for c in self.hard_constraints],
            "soft_prefs": self.soft_prefs.to_dict(),
            "specials": [s.to_dict() for s in self.specials],
            "globals": [g.to_dict() for g in self.globals],
        }

    def to_json(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n").encode("utf-8")


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def schema_document() -> dict:
    """The published JSON Schema for intent documents."""
    text = resources.files("intentroute").joinpath("data/intent_schema.json").read_text("utf-8")
    return json.loads(text)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

class _Checker:
    def __init__(self):
        self.violations: list[Violation] = []

    def add(self, path, rule, message):
        self.violations.append(Violation(path, rule, message))

    def is_number(self, value):
        return isinstance(value, (int, float)) and not isinstance(value, bool)

    def obj(self, value, path, required, optional=()) -> bool:
        if not isinstance(value, dict):
            self.add(path, "type", f"{path or 'document'} must be an object")
            return False
        for key in required:
            if key not in value:
                self.add(_join(path, key), "required", f"missing required field {key!r}")
        for key in value:
            if key not in required and key not in optional:
                self.add(_join(path, key), "unknown", f"unknown field {key!r}")
        return True

    def point(self, value, path):
        if (
            not isinstance(value, list)
            or len(value) != 2
            or not all(self.is_number(v) for v in value)
        ):
            self.add(path, "type", f"{path} must be an [x, y] pair of numbers")
            return None
        return (value[0], value[1])


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def validate(document: bytes | str | Mapping) -> ParsedIntent:
    """Parse and check an intent document.

    Returns a typed :class:`ParsedIntent`; otherwise raises
    :class:`IntentValidationError` listing every violation. No partially
    valid intent is ever returned.
    """
    if isinstance(document, (bytes, str)):
        try:
            document = json.loads(document)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise IntentValidationError([Violation("", "json", f"not valid JSON: {exc}")]) from None
    ck = _Checker()
    top = ("version", "start", "end", "poi_stops", "hard_constraints", "soft_prefs", "specials", "globals")
    if not ck.obj(document, "", top, optional=("loop",)):
        raise IntentValidationError(ck.violations)
    doc = document
    if "version" in doc and doc["version"] != INTENT_VERSION:
        ck.add("version", "const", f"version must be {INTENT_VERSION}")
    start = ck.point(doc.get("start"), "start") if "start" in doc else None
    end = ck.point(doc.get("end"), "end") if "end" in doc else None
    loop = doc.get("loop", False)
    if not isinstance(loop, bool):
        ck.add("loop", "type", "loop must be a boolean")
        loop = False
    if start is not None and end is not None and start == end and not loop:
        ck.add("end", "distinct", "start and end coincide but loop is not set")

    stops = tuple(_lists(ck, doc, "poi_stops", lambda v, p: _poi_req(ck, v, p, nested=False)))
    hard = tuple(_lists(ck, doc, "hard_constraints", lambda v, p: _hard(ck, v, p)))
    prefs = _prefs(ck, doc.get("soft_prefs"), "soft_prefs") if "soft_prefs" in doc else None
    specials = tuple(_lists(ck, doc, "specials", lambda v, p: _special(ck, v, p)))
    globals_ = tuple(_lists(ck, doc, "globals", lambda v, p: _global(ck, v, p)))

    positions = [s.fixed_position for s in stops if s is not None and s.fixed_position is not None]
    for i, s in enumerate(stops):
        if s is not None and s.fixed_position is not None and s.fixed_position >= len(stops):
            ck.add(f"poi_stops[{i}].fixed_position", "range", "fixed_position exceeds the number of stops")
    if len(set(positions)) != len(positions):
        ck.add("poi_stops", "unique", "two stops share a fixed_position")

    if ck.violations:
        raise IntentValidationError(ck.violations)
    return ParsedIntent(start, end, stops, hard, prefs, specials, globals_, loop)


def _lists(ck, doc, key, item_fn):
    if key not in doc:
        return []
    value = doc[key]
    if not isinstance(value, list):
        ck.add(key, "type", f"{key} must be a list")
        return []
    return [item_fn(v, f"{key}[{i}]") for i, v in enumerate(value)]


def _filters(ck, value, path, category):
    if not isinstance(value, list):
        ck.add(path, "type", "filters must be a list")
        return ()
    out = []
    for i, item in enumerate(value):
        p = f"{path}[{i}]"
        if not ck.obj(item, p, ("field", "op", "value")):
            continue
        if any(k not in item for k in ("field", "op", "value")):
            continue
        flt = AttrFilter(item["field"], item["op"], item["value"])
        if category in CATEGORIES:
            try:
                check_filter(category, flt)
            except PoiError as exc:
                ck.add(p, "filter", str(exc))
                continue
        out.append(flt)
    return tuple(out)


def _poi_req(ck, value, path, nested):
    keys = ("category", "filters")
    optional = ("alternatives", "fixed_position")
    if not ck.obj(value, path, keys, optional):
        return None
    category = value.get("category")
    if category not in CATEGORIES:
        ck.add(_join(path, "category"), "enum", f"unknown category {category!r}; expected one of {list(CATEGORIES)}")
    filters = _filters(ck, value.get("filters", []), _join(path, "filters"), category)
    alternatives = value.get("alternatives")
    alts = None
    if alternatives is not None:
        if nested:
            ck.add(_join(path, "alternatives"), "nesting", "alternatives cannot be nested")
        elif not isinstance(alternatives, list) or not alternatives:
            ck.add(_join(path, "alternatives"), "non_empty", "alternatives must be a non-empty list when present")
        else:
            alts = tuple(
                _poi_req(ck, a, f"{path}.alternatives[{i}]", nested=True) for i, a in enumerate(alternatives)
            )
    pos = value.get("fixed_position")
    if pos is not None and (not isinstance(pos, int) or isinstance(pos, bool) or pos < 0):
        ck.add(_join(path, "fixed_position"), "type", "fixed_position must be a non-negative integer or null")
        pos = None
    if nested and pos is not None:
        ck.add(_join(path, "fixed_position"), "nesting", "alternatives inherit the group's position")
    return PoiRequirement(category, filters, alts, pos)


def _hard(ck, value, path):
    if not isinstance(value, dict):
        ck.add(path, "type", f"{path} must be an object")
        return None
    kind = value.get("kind")
    if kind not in CONSTRAINT_KINDS:
        ck.add(_join(path, "kind"), "enum", f"unknown constraint kind {kind!r}")
        return None
    if kind == "forbid_edges":
        ck.obj(value, path, ("kind", "edges"))
        edges = []
        raw = value.get("edges")
        if not isinstance(raw, list) or not raw:
            ck.add(_join(path, "edges"), "non_empty", "forbid_edges needs a non-empty edge list")
            return None
        for i, pair in enumerate(raw):
            p = f"{path}.edges[{i}]"
            if not isinstance(pair, list) or len(pair) != 2:
                ck.add(p, "type", "each edge must be a pair of [x, y] points")
                continue
            a, b = ck.point(pair[0], p + "[0]"), ck.point(pair[1], p + "[1]")
            if a is not None and b is not None:
                edges.append((a, b))
        return HardPathConstraint(kind, edges=tuple(edges))
    ck.obj(value, path, ("kind", "attribute", "threshold"))
    attr, thr = value.get("attribute"), value.get("threshold")
    if attr not in ATTRIBUTES:
        ck.add(_join(path, "attribute"), "enum", f"attribute {attr!r} must be one of {list(ATTRIBUTES)}")
    if not ck.is_number(thr) or not 0 <= thr <= 1:
        ck.add(_join(path, "threshold"), "range", "threshold must be a number in [0, 1]")
        return None
    return HardPathConstraint(kind, attr, float(thr))


def _prefs(ck, value, path):
    if not isinstance(value, dict):
        ck.add(path, "type", "soft_prefs must be an object")
        return None
    weights = {}
    for key, v in value.items():
        p = _join(path, key)
        if key not in OBJECTIVES:
            ck.add(p, "enum", f"unknown preference feature {key!r}")
        elif not ck.is_number(v) or v not in PREF_LEVELS:
            ck.add(p, "domain", f"{p} not in {{0,0.5,1}}")
        else:
            weights[key] = v
    return PreferenceVector(weights)


def _special(ck, value, path):
    if not ck.obj(value, path, ("topic", "mode", "payload")):
        return None
    topic, mode, payload = value.get("topic"), value.get("mode"), value.get("payload")
    if not isinstance(topic, str) or not topic:
        ck.add(_join(path, "topic"), "type", "topic must be a non-empty string")
    if mode not in SPECIAL_MODES:
        ck.add(_join(path, "mode"), "enum", f"mode must be 'info' or 'modify', got {mode!r}")
    if not isinstance(payload, dict):
        ck.add(_join(path, "payload"), "type", "payload must be an object")
        return None
    if mode == "modify":
        ppath = _join(path, "payload")
        ck.obj(payload, ppath, (), ("hard_constraints", "poi_filters"))
        hard = payload.get("hard_constraints", [])
        flts = payload.get("poi_filters", [])
        if not hard and not flts:
            ck.add(ppath, "delta", "modify payload must carry hard_constraints or poi_filters")
        if not isinstance(hard, list):
            ck.add(_join(ppath, "hard_constraints"), "type", "must be a list")
        else:
            for i, c in enumerate(hard):
                _hard(ck, c, f"{ppath}.hard_constraints[{i}]")
        if not isinstance(flts, list):
            ck.add(_join(ppath, "poi_filters"), "type", "must be a list")
        else:
            for i, f in enumerate(flts):
                fp = f"{ppath}.poi_filters[{i}]"
                if ck.obj(f, fp, ("category", "field", "op", "value")):
                    cat = f.get("category")
                    if cat not in CATEGORIES:
                        ck.add(_join(fp, "category"), "enum", f"unknown category {cat!r}")
                    elif all(k in f for k in ("field", "op", "value")):
                        try:
                            check_filter(cat, AttrFilter(f["field"], f["op"], f["value"]))
                        except PoiError as exc:
                            ck.add(fp, "filter", str(exc))
    return SpecialRequirement(topic, mode, payload)


def _global(ck, value, path):
    if not ck.obj(value, path, ("metric", "threshold"), ("critical",)):
        return None
    metric, thr, crit = value.get("metric"), value.get("threshold"), value.get("critical", False)
    if metric not in GLOBAL_METRICS:
        ck.add(_join(path, "metric"), "enum", f"metric must be one of {list(GLOBAL_METRICS)}")
    if not ck.is_number(thr) or thr <= 0:
        ck.add(_join(path, "threshold"), "range", "threshold must be a positive number")
        return None
    if not isinstance(crit, bool):
        ck.add(_join(path, "critical"), "type", "critical must be a boolean")
        crit = False
    return GlobalConstraint(metric, thr, crit)


def _constraint_from(data: Mapping) -> HardPathConstraint:
    if data["kind"] == "forbid_edges":
        return HardPathConstraint(
            "forbid_edges", edges=tuple((tuple(a), tuple(b)) for a, b in data["edges"])
        )
    return HardPathConstraint(data["kind"], data["attribute"], float(data["threshold"]))


# ---------------------------------------------------------------------------
# preferences -> search parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchParams:
    active: tuple[str, ...]
    weights: Mapping[str, float] = field(hash=False)
    implied: tuple[HardPathConstraint, ...] = ()


def derive_search_params(prefs: PreferenceVector) -> SearchParams:
    """Active objectives, weights and implied cut-offs from a preference vector.

    dist is always active with weight 1. A non-dist feature at 0.5 joins with
    weight 0.5; at 1 it joins with weight 1 and also becomes an edge cut-off
    ``avoid_attr_above(feature, 0.5)``.
    """
    active = ["dist"]
    weights = {"dist": 1.0}
    implied = []
    for name in ATTRIBUTES:
        p = prefs[name]
        if p == 0:
            continue
        active.append(name)
        weights[name] = float(p)
        if p == 1:
            implied.append(avoid_above(name, IMPLIED_CUTOFF))
    return SearchParams(tuple(active), weights, tuple(implied))
