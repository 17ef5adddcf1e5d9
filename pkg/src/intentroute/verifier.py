"""Global-constraint verification, relaxation/re-planning and comparative
rationales for assembled route candidates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .intent import GLOBAL_METRICS, GlobalConstraint
from .mapenv import OBJECTIVES, CostVector
from .poicatalog import PoiRecord

RELAX_FACTORS = (1.1, 1.25)
MAX_REPLANS = 2
DEFAULT_SPEED = 1.0


@dataclass(frozen=True)
class Waypoint:
    node: int
    kind: str  # start | poi | end
    poi_id: str | None = None

    def to_dict(self) -> dict:
        return {"node": self.node, "kind": self.kind, "poi_id": self.poi_id}


@dataclass(frozen=True)
class RouteSolution:
    waypoints: tuple[Waypoint, ...]
    path: tuple[int, ...]
    cost: CostVector
    pois: tuple[PoiRecord, ...] = ()
    notes: tuple[str, ...] = ()
    rationale: str = ""

    def visits_in_order(self) -> bool:
        i = 0
        for node in self.path:
            while i < len(self.waypoints) and self.waypoints[i].node == node:
                i += 1
        return i == len(self.waypoints)


@dataclass(frozen=True)
class GlobalViolation:
    metric: str
    value: float
    threshold: float
    critical: bool = False


@dataclass(frozen=True)
class Relaxation:
    metric: str
    factor: float
    threshold: float
    relaxed_threshold: float
    value: float

    def notice(self) -> str:
        return (
            f"{self.metric} {self.value:.2f} exceeds {self.threshold:g}; "
            f"relaxed by factor {self.factor} to {self.relaxed_threshold:g}"
        )


@dataclass(frozen=True)
class Verdict:
    status: str  # feasible | relaxed | infeasible
    violations: tuple[GlobalViolation, ...] = ()
    relaxations: tuple[Relaxation, ...] = ()
    replans: int = 0
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.status not in ("feasible", "relaxed", "infeasible"):
            raise ValueError(f"unknown verdict status {self.status!r}")
        if self.status == "relaxed" and not self.relaxations:
            raise ValueError("a relaxed verdict must record at least one relaxation")

    @property
    def ok(self) -> bool:
        return self.status != "infeasible"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "violations": [
                {"metric": v.metric, "value": round(v.value, 6), "threshold": v.threshold, "critical": v.critical}
                for v in self.violations
            ],
            "relaxations": [
                {"metric": r.metric, "factor": r.factor, "threshold": r.threshold,
                 "relaxed_threshold": round(r.relaxed_threshold, 6)}
                for r in self.relaxations
            ],
            "replans": self.replans,
            "notes": list(self.notes),
        }


def metric_value(sol: RouteSolution, metric: str, speed: float = DEFAULT_SPEED) -> float:
    if metric == "total_dist":
        return sol.cost.dist
    if metric == "total_time":
        return sol.cost.dist / speed
    if metric == "total_budget":
        return float(sum(p.attrs.get("average_cost", 0) for p in sol.pois))
    raise ValueError(f"unknown global metric {metric!r}; expected one of {GLOBAL_METRICS}")


def _time_note(globals_, speed):
    if any(g.metric == "total_time" for g in globals_):
        return (f"total_time assumes a constant speed of {speed:g} distance units per time unit",)
    return ()


def check_globals(sol: RouteSolution, globals_: Sequence[GlobalConstraint], speed: float = DEFAULT_SPEED) -> Verdict:
    """Feasible iff every metric value is at most its threshold (inclusive)."""
    violations = []
    for g in globals_:
        value = metric_value(sol, g.metric, speed)
        if not value <= g.threshold:
            violations.append(GlobalViolation(g.metric, value, g.threshold, g.critical))
    status = "infeasible" if violations else "feasible"
    return Verdict(status, tuple(violations), notes=_time_note(globals_, speed))


Replanner = Callable[[RouteSolution, int], "RouteSolution | None"]


def relax_or_replan(
    sol: RouteSolution,
    verdict: Verdict,
    globals_: Sequence[GlobalConstraint],
    replan: Replanner | None = None,
    speed: float = DEFAULT_SPEED,
) -> tuple[Verdict, RouteSolution]:
    """Resolve an infeasible verdict.

    Violated critical constraints request a re-plan (``replan(solution,
    round)``, at most two rounds). Violated non-critical constraints are
    relaxed by 1.1, then 1.25; a violation beyond 1.25x stays infeasible.
    Critical constraints are never relaxed.
    """
    current = sol
    rounds = 0
    while True:
        if verdict.status == "feasible":
            return _with(verdict, replans=rounds), current
        critical = [v for v in verdict.violations if v.critical]
        if critical:
            if replan is None or rounds >= MAX_REPLANS:
                return _infeasible(verdict, rounds, "critical constraint violated; re-planning exhausted"), current
            rounds += 1
            revised = replan(current, rounds)
            if revised is None:
                return _infeasible(verdict, rounds, "critical constraint violated; no alternative POI left"), current
            current = revised
            verdict = check_globals(current, globals_, speed)
            continue
        relaxations = []
        for v in verdict.violations:
            for factor in RELAX_FACTORS:
                limit = v.threshold * factor
                if v.value <= limit:
                    relaxations.append(Relaxation(v.metric, factor, v.threshold, limit, v.value))
                    break
            else:
                return _infeasible(
                    verdict, rounds, f"{v.metric} {v.value:.2f} exceeds {v.threshold:g} even after relaxation by 1.25"
                ), current
        notes = verdict.notes + tuple(r.notice() for r in relaxations)
        return Verdict("relaxed", verdict.violations, tuple(relaxations), rounds, notes), current


def _with(verdict, replans):
    return Verdict(verdict.status, verdict.violations, verdict.relaxations, replans, verdict.notes)


def _infeasible(verdict, rounds, reason):
    return Verdict("infeasible", verdict.violations, (), rounds, verdict.notes + (reason,))


def verify(sol, globals_, replan=None, speed=DEFAULT_SPEED) -> tuple[Verdict, RouteSolution]:
    verdict = check_globals(sol, globals_, speed)
    if verdict.ok:
        return verdict, sol
    return relax_or_replan(sol, verdict, globals_, replan, speed)


# ---------------------------------------------------------------------------
# comparative rationale
# ---------------------------------------------------------------------------

COST_NAMES = {
    "dist": "distance",
    "scenic": "scenic cost",
    "energy": "energy cost",
    "danger": "danger cost",
    "slope": "slope cost",
    "toll": "toll cost",
}


def option_label(i: int) -> str:
    return f"Option {chr(ord('A') + i)}" if i < 26 else f"Option {i + 1}"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _delta_phrase(name: str, a: float, b: float) -> str | None:
    if _fmt(a) == _fmt(b):
        return None
    d = abs(b - a)
    if name == "dist":
        word = "longer" if b > a else "shorter"
        return f"{_fmt(d)} units {word} ({_fmt(a)} -> {_fmt(b)})"
    verb = "raises" if b > a else "reduces"
    return f"{verb} {COST_NAMES[name]} by {_fmt(d)} ({_fmt(a)} -> {_fmt(b)})"


def explain(candidates: Sequence[RouteSolution | Sequence[float]]) -> list[str]:
    """One deterministic rationale per candidate, each compared with the first."""
    if not candidates:
        raise ValueError("explain needs at least one candidate")
    costs = [c.cost if isinstance(c, RouteSolution) else CostVector(*c) for c in candidates]
    base = costs[0]
    summary = ", ".join(f"{COST_NAMES[n]} {_fmt(x)}" for n, x in zip(OBJECTIVES, base))
    out = [f"{option_label(0)} (recommended): {summary}."]
    for i, cost in enumerate(costs[1:], start=1):
        parts = [p for p in (_delta_phrase(n, a, b) for n, a, b in zip(OBJECTIVES, base, cost)) if p]
        if parts:
            out.append(f"{option_label(i)} compared with {option_label(0)}: " + "; ".join(parts) + ".")
        else:
            out.append(f"{option_label(i)} compared with {option_label(0)}: identical costs.")
    return out
