"""Benchmark harness: query corpus, parse-quality scores and the scenario
cost table."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from statistics import fmean
from typing import Iterable, Sequence

from .intent import HardPathConstraint, ParsedIntent, PoiRequirement, PreferenceVector, validate
from .mapenv import CostVector, RouteGraph
from .parser import ParseOutcome
from .poicatalog import AttrFilter, PoiRecord

DIFFICULTIES = ("simple", "medium", "hard")
MAX_STOPS = {"simple": 2, "medium": 3, "hard": 5}
CSV_COLUMNS = ("cost_danger", "cost_dist", "cost_energy", "cost_scenic", "cost_slope", "cost_toll")
CSV_HEADER = "scenario," + ",".join(CSV_COLUMNS)


@dataclass(frozen=True)
class BenchQuery:
    id: str
    difficulty: str
    text: str
    gold: ParsedIntent

    def __post_init__(self):
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"{self.id}: difficulty must be one of {DIFFICULTIES}")
        if len(self.gold.poi_stops) > MAX_STOPS[self.difficulty]:
            raise ValueError(
                f"{self.id}: {len(self.gold.poi_stops)} stops exceed the {self.difficulty} tier limit "
                f"of {MAX_STOPS[self.difficulty]}"
            )


def load_corpus(source: str | Path | None = None) -> list[BenchQuery]:
    """Read a JSONL corpus; ``None`` loads the bundled 20-query set."""
    if source is None:
        text = resources.files("intentroute").joinpath("data/corpus.jsonl").read_text("utf-8")
    else:
        text = Path(source).read_text("utf-8")
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        row = json.loads(line)
        try:
            out.append(BenchQuery(row["id"], row["difficulty"], row["text"], validate(row["gold"])))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"corpus line {lineno}: {exc}") from exc
    ids = [q.id for q in out]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate query ids in corpus")
    return out


# ---------------------------------------------------------------------------
# canonical forms
# ---------------------------------------------------------------------------

def _value(v):
    # tag the type so True never equals 1.0
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, (int, float)):
        return ("n", float(v))
    return ("s", str(v).casefold())


def canon_filters(filters: Iterable[AttrFilter]) -> tuple:
    return tuple(sorted((f.field, f.op, _value(f.value)) for f in filters))


def canon_poi(req: PoiRequirement) -> tuple:
    """One stop: the sorted set of its (category, filters) options."""
    return tuple(sorted((opt.category, canon_filters(opt.filters)) for opt in req.options()))


def canon_constraint(c: HardPathConstraint) -> tuple:
    if c.kind == "forbid_edges":
        edges = frozenset(frozenset((tuple(a), tuple(b))) for a, b in c.edges)
        return (c.kind, tuple(sorted(tuple(sorted(e)) for e in edges)))
    return (c.kind, c.attribute, float(c.threshold))


def canon_prefs(prefs: PreferenceVector) -> list[tuple]:
    return [(k, float(v)) for k, v in prefs.weights.items() if v]


def set_f1(pred: Iterable, gold: Iterable) -> float:
    """Multiset F1; 1.0 when both sides are empty."""
    p, g = Counter(pred), Counter(gold)
    if not p and not g:
        return 1.0
    hit = sum((p & g).values())
    if hit == 0:
        return 0.0
    precision = hit / sum(p.values())
    recall = hit / sum(g.values())
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# scores
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryScore:
    poi_f1: float
    const_f1: float
    pref_f1: float
    schema_valid: bool


@dataclass(frozen=True)
class ParseScore:
    poi_f1: float
    const_f1: float
    pref_f1: float
    struct_rate: float
    overall_f1: float
    n: int = 0

    def to_dict(self) -> dict:
        return {
            "poi_f1": self.poi_f1, "const_f1": self.const_f1, "pref_f1": self.pref_f1,
            "struct_rate": self.struct_rate, "overall_f1": self.overall_f1, "n": self.n,
        }

    def table(self, label: str = "rule") -> str:
        cols = ("POI", "Const", "Pref", "Struct", "Overall")
        vals = (self.poi_f1, self.const_f1, self.pref_f1, self.struct_rate, self.overall_f1)
        width = max(len(label), len("Method"))
        head = f"{'Method':<{width}}  " + "  ".join(f"{c:>7}" for c in cols)
        row = f"{label:<{width}}  " + "  ".join(f"{v:>7.3f}" for v in vals)
        return f"{head}\n{row}\n"


def score_parse(pred: ParseOutcome | ParsedIntent | None, gold: ParsedIntent) -> QueryScore:
    """Per-query F1 for POI requirements, hard constraints and preferences.

    A schema-invalid prediction (or ``None``) scores zero on every component.
    """
    intent = pred.intent if isinstance(pred, ParseOutcome) else pred
    if intent is None:
        return QueryScore(0.0, 0.0, 0.0, False)
    return QueryScore(
        set_f1(map(canon_poi, intent.poi_stops), map(canon_poi, gold.poi_stops)),
        set_f1(map(canon_constraint, intent.hard_constraints), map(canon_constraint, gold.hard_constraints)),
        set_f1(canon_prefs(intent.soft_prefs), canon_prefs(gold.soft_prefs)),
        True,
    )


def aggregate(scores: Sequence[QueryScore]) -> ParseScore:
    """Macro average over queries."""
    if not scores:
        raise ValueError("cannot aggregate an empty corpus")
    poi = fmean(s.poi_f1 for s in scores)
    const = fmean(s.const_f1 for s in scores)
    pref = fmean(s.pref_f1 for s in scores)
    struct = sum(s.schema_valid for s in scores) / len(scores)
    return ParseScore(poi, const, pref, struct, fmean((poi, const, pref)), len(scores))


def evaluate(corpus: Sequence[BenchQuery], parse_fn) -> tuple[ParseScore, list[tuple[str, QueryScore]]]:
    """Score ``parse_fn(text) -> ParseOutcome`` over a corpus, in corpus order."""
    per_query = [(q.id, score_parse(parse_fn(q.text), q.gold)) for q in corpus]
    return aggregate([s for _, s in per_query]), per_query


# ---------------------------------------------------------------------------
# scenario cost table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioRow:
    name: str
    cost: CostVector | None
    error: str | None = None

    def cells(self) -> list[str]:
        if self.cost is None:
            return ["infeasible"] * len(CSV_COLUMNS)
        return [f"{getattr(self.cost, col[5:]):.2f}" for col in CSV_COLUMNS]


def _shared_shape(intent: ParsedIntent):
    return (intent.start, intent.end, intent.loop, intent.poi_stops)


def scenario_table(
    graph: RouteGraph,
    pois: Sequence[PoiRecord],
    scenarios: Sequence[tuple[str, ParsedIntent]],
) -> list[ScenarioRow]:
    """Top-1 scalarized route cost per scenario.

    Scenarios must share start, end and stops; only preferences (and
    constraints) may differ.
    """
    from .orchestrator import plan_route

    if not scenarios:
        raise ValueError("no scenarios given")
    shape = _shared_shape(scenarios[0][1])
    for name, intent in scenarios[1:]:
        if _shared_shape(intent) != shape:
            raise ValueError(f"scenario {name!r} differs from {scenarios[0][0]!r} in start, end or stops")
    rows = []
    for name, intent in scenarios:
        result = plan_route(intent, graph, pois, k=1, scalarized=True)
        if result.infeasibility is not None:
            rows.append(ScenarioRow(name, None, f"{result.infeasibility.task}: {result.infeasibility.reason}"))
        elif not result.candidates:
            rows.append(ScenarioRow(name, None, "no route"))
        else:
            sol, verdict = result.candidates[0]
            err = None if verdict.ok else "; ".join(verdict.notes) or "global constraints violated"
            rows.append(ScenarioRow(name, sol.cost if verdict.ok else None, err))
    return rows


def scenarios_csv(rows: Sequence[ScenarioRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", *CSV_COLUMNS])
    for row in rows:
        w.writerow([row.name, *row.cells()])
    return buf.getvalue()


def scenarios_text(rows: Sequence[ScenarioRow]) -> str:
    head = ["Scenario", *CSV_COLUMNS]
    body = [[r.name, *r.cells()] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(x.ljust(w) if i == 0 else x.rjust(w) for i, (x, w) in enumerate(zip(line, widths)))
             for line in [head, *body]]
    for r in rows:
        if r.error:
            lines.append(f"note: {r.name}: {r.error}")
    return "\n".join(lines) + "\n"


def load_scenarios(data: str | bytes | dict) -> list[tuple[str, ParsedIntent]]:
    """Scenario file: ``{"base": <intent>, "scenarios": [{"name", "soft_prefs"}, ...]}``.

    Each scenario is the base intent with its own preference vector, so the
    shared start/end/stops requirement holds by construction.
    """
    doc = json.loads(data) if isinstance(data, (str, bytes)) else data
    base = dict(doc["base"])
    out = []
    for sc in doc["scenarios"]:
        d = dict(base)
        d["soft_prefs"] = sc.get("soft_prefs", {})
        if "hard_constraints" in sc:
            d["hard_constraints"] = sc["hard_constraints"]
        out.append((sc["name"], validate(d)))
    return out


__all__ = [
    "BenchQuery", "ParseScore", "QueryScore", "ScenarioRow", "load_corpus", "score_parse", "aggregate",
    "evaluate", "set_f1", "scenario_table", "scenarios_csv", "scenarios_text", "load_scenarios", "CSV_HEADER",
]
