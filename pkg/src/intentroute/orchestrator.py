"""Management stage: turns a ParsedIntent into a layered sub-task plan and
runs it (specials -> POI selection -> stop ordering -> segment search ->
verification)."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

from .intent import (
    GlobalConstraint,
    HardPathConstraint,
    ParsedIntent,
    PoiRequirement,
    SpecialRequirement,
    derive_search_params,
)
from .mapenv import RouteGraph
from .mosearch import (
    DEFAULT_EPSILON,
    Route,
    SearchBudgetExceeded,
    SearchSpec,
    Unreachable,
    path_cost,
    search_routes,
    shortest_path,
)
from .poicatalog import AttrFilter, PoiError, PoiRecord, TooManyStops, filter_pois, order_stops, rank
from .verifier import DEFAULT_SPEED, RouteSolution, Verdict, Waypoint, explain, verify

log = logging.getLogger(__name__)

_KIND_RANK = {"special": 0, "poi": 1, "order": 2, "path": 3, "verify": 4}


@dataclass(frozen=True)
class SubTask:
    id: str
    kind: str  # special | poi | order | path | verify
    payload: Any = None
    deps: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ConstraintScope:
    constraint: Any
    scope: str  # local | global
    tasks: tuple[str, ...]


@dataclass(frozen=True)
class Plan:
    intent: ParsedIntent
    tasks: tuple[SubTask, ...]
    layers: tuple[tuple[str, ...], ...]
    scopes: tuple[ConstraintScope, ...]

    def task(self, task_id: str) -> SubTask:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def layer_kinds(self) -> list[list[str]]:
        return [[self.task(i).kind for i in layer] for layer in self.layers]


def _task_key(task_id: str):
    kind, _, idx = task_id.partition(":")
    return (_KIND_RANK[kind], int(idx) if idx else 0)


def build_plan(intent: ParsedIntent) -> Plan:
    """Dependency-ordered plan with parallel layers.

    Modify-mode specials come first (they can change constraints everything
    else depends on); info specials and POI lookups share the next layer;
    stop ordering waits for every POI; path segments are siblings; the
    verifier closes the plan.
    """
    tasks: list[SubTask] = []
    modify_ids = [f"special:{i}" for i, s in enumerate(intent.specials) if s.mode == "modify"]
    info_ids = [f"special:{i}" for i, s in enumerate(intent.specials) if s.mode == "info"]
    for i, s in enumerate(intent.specials):
        deps = frozenset() if s.mode == "modify" else frozenset(modify_ids)
        tasks.append(SubTask(f"special:{i}", "special", s, deps))
    poi_ids = []
    for i, req in enumerate(intent.poi_stops):
        poi_ids.append(f"poi:{i}")
        tasks.append(SubTask(f"poi:{i}", "poi", req, frozenset(modify_ids)))
    if poi_ids:
        tasks.append(SubTask("order", "order", None, frozenset(poi_ids)))
        seg_deps = frozenset({"order"})
    else:
        seg_deps = frozenset(modify_ids)
    path_ids = [f"path:{j}" for j in range(len(intent.poi_stops) + 1)]
    for j, pid in enumerate(path_ids):
        tasks.append(SubTask(pid, "path", j, seg_deps))
    tasks.append(SubTask("verify", "verify", intent.globals, frozenset(path_ids + info_ids)))

    depth: dict[str, int] = {}
    by_id = {t.id: t for t in tasks}

    def level(tid):
        if tid not in depth:
            deps = by_id[tid].deps
            depth[tid] = 1 + max((level(d) for d in deps), default=-1)
        return depth[tid]

    for t in tasks:
        level(t.id)
    n_layers = max(depth.values()) + 1
    layers = tuple(
        tuple(sorted((tid for tid, d in depth.items() if d == k), key=_task_key)) for k in range(n_layers)
    )

    scopes = []
    for i, req in enumerate(intent.poi_stops):
        for opt in req.options():
            for flt in opt.filters:
                scopes.append(ConstraintScope(flt, "local", (f"poi:{i}",)))
    for c in intent.hard_constraints:
        scopes.append(ConstraintScope(c, "local", tuple(path_ids)))
    for g in intent.globals:
        scopes.append(ConstraintScope(g, "global", ("verify",)))
    return Plan(intent, tuple(tasks), layers, tuple(scopes))


# ---------------------------------------------------------------------------
# special requirements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintState:
    hard: tuple[HardPathConstraint, ...] = ()
    poi_filters: tuple[tuple[str, AttrFilter], ...] = ()
    notes: tuple[str, ...] = ()

    def filters_for(self, category: str) -> tuple[AttrFilter, ...]:
        return tuple(f for cat, f in self.poi_filters if cat == category)


InfoProvider = Callable[[SpecialRequirement], str]


def default_info(req: SpecialRequirement) -> str:
    note = req.payload.get("note")
    if note:
        return f"{req.topic}: {note}"
    query = req.payload.get("query", req.topic)
    return f"{req.topic}: {query} (no live data source configured)"


def apply_special(req: SpecialRequirement, state: ConstraintState,
                  info_provider: InfoProvider = default_info) -> ConstraintState:
    """Fold one special requirement into the constraint state.

    ``modify`` merges its deltas with set semantics (re-applying is a
    no-op); ``info`` only appends a note for the final output.
    """
    if req.mode == "info":
        return replace(state, notes=state.notes + (info_provider(req),))
    if req.mode != "modify":
        raise ValueError(f"unknown special mode {req.mode!r}")
    try:
        hard = req.hard_constraints()
        flts = req.poi_filters()
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"special {req.topic!r}: payload is not a supported constraint delta ({exc})") from None
    if not hard and not flts:
        raise ValueError(f"special {req.topic!r}: modify payload carries no constraint delta")
    new_hard = list(state.hard)
    for c in hard:
        if c not in new_hard:
            new_hard.append(c)
    new_flts = list(state.poi_filters)
    for item in flts:
        if item not in new_flts:
            new_flts.append(item)
    return replace(state, hard=tuple(new_hard), poi_filters=tuple(new_flts))


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Infeasibility:
    task: str
    reason: str
    binding: tuple[HardPathConstraint, ...] = ()

    def to_dict(self) -> dict:
        return {"task": self.task, "reason": self.reason, "binding": [c.to_dict() for c in self.binding]}


@dataclass
class Execution:
    plan: Plan
    candidates: list[RouteSolution] = field(default_factory=list)
    state: ConstraintState = field(default_factory=ConstraintState)
    ranked: dict[int, list[PoiRecord]] = field(default_factory=dict)
    choices: dict[int, int] = field(default_factory=dict)
    infeasibility: Infeasibility | None = None
    notes: list[str] = field(default_factory=list)


def _run_layer(items, fn, workers):
    """Run ``fn`` over ``items``; results come back in input order either way."""
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def execute(
    plan: Plan,
    graph: RouteGraph,
    catalog: Sequence[PoiRecord],
    *,
    k: int = 3,
    epsilon: float = DEFAULT_EPSILON,
    scalarized: bool = False,
    choices: Mapping[int, int] | None = None,
    info_provider: InfoProvider = default_info,
    workers: int | None = None,
) -> Execution:
    """Run a plan and assemble up to ``k`` end-to-end candidates.

    ``choices`` maps a stop index to the rank position of the POI to use
    (default 0, the best-ranked match); re-planning bumps it.
    """
    intent = plan.intent
    ex = Execution(plan, choices=dict(choices or {}))
    try:
        start = graph.node_at(*intent.start)
        end = graph.node_at(*intent.end)
    except KeyError as exc:
        ex.infeasibility = Infeasibility("plan", str(exc.args[0]))
        return ex

    state = ConstraintState(hard=tuple(intent.hard_constraints))
    params = derive_search_params(intent.soft_prefs)

    for layer in plan.layers:
        kinds = {plan.task(t).kind for t in layer}
        specials = [plan.task(t) for t in layer if plan.task(t).kind == "special"]
        for task in sorted(specials, key=lambda t: _task_key(t.id)):
            if task.payload.mode == "modify":
                try:
                    state = apply_special(task.payload, state, info_provider)
                except ValueError as exc:
                    ex.infeasibility = Infeasibility(task.id, str(exc))
                    return ex
        infos = [t for t in specials if t.payload.mode == "info"]
        for note in _run_layer(infos, lambda t: info_provider(t.payload), workers):
            state = replace(state, notes=state.notes + (note,))

        if "poi" in kinds:
            poi_tasks = [plan.task(t) for t in layer if plan.task(t).kind == "poi"]
            results = _run_layer(
                poi_tasks, lambda t: _select_pois(t, graph, catalog, state, start, end), workers
            )
            for task, result in zip(poi_tasks, results):
                i = _task_key(task.id)[1]
                if isinstance(result, Infeasibility):
                    ex.infeasibility = result
                    ex.state = state
                    return ex
                ex.ranked[i] = result

    ex.state = state
    selected = []
    for i in range(len(intent.poi_stops)):
        pick = ex.choices.get(i, 0)
        if pick >= len(ex.ranked[i]):
            ex.infeasibility = Infeasibility(f"poi:{i}", "no further ranked candidates")
            return ex
        selected.append(ex.ranked[i][pick])

    fixed = {i: req.fixed_position for i, req in enumerate(intent.poi_stops) if req.fixed_position is not None}
    try:
        ordered = _order(graph, start, end, selected, fixed)
    except (TooManyStops, ValueError) as exc:
        ex.infeasibility = Infeasibility("order", str(exc))
        return ex

    waypoints = [Waypoint(start, "start")]
    waypoints += [Waypoint(p.node, "poi", p.id) for p in ordered]
    waypoints.append(Waypoint(end, "end"))
    stop_pois = tuple(ordered)

    spec = SearchSpec.from_params(params, state.hard, epsilon=epsilon, k=k)
    legs = list(zip(waypoints, waypoints[1:]))

    def plan_leg(j):
        a, b = legs[j]
        try:
            return search_routes(graph, a.node, b.node, spec, scalarized=scalarized)
        except SearchBudgetExceeded as exc:
            log.warning("segment %d: %s; falling back to the scalarized route", j, exc)
            ex.notes.append(f"path:{j}: Pareto label budget exceeded; returned the scalarized optimum only")
            return [shortest_path(graph, a.node, b.node, spec)]
        except Unreachable as exc:
            return Infeasibility(f"path:{j}", str(exc), exc.binding)

    alternatives = _run_layer(list(range(len(legs))), plan_leg, workers)
    for alts in alternatives:
        if isinstance(alts, Infeasibility):
            ex.infeasibility = alts
            return ex

    width = max(len(a) for a in alternatives)
    seen = set()
    for i in range(width):
        full: list[int] = []
        for alts in alternatives:
            seg = alts[min(i, len(alts) - 1)].path
            full.extend(seg if not full else seg[1:])
        key = tuple(full)
        if key in seen:
            continue
        seen.add(key)
        ex.candidates.append(
            RouteSolution(tuple(waypoints), key, path_cost(graph, key), stop_pois, state.notes + tuple(ex.notes))
        )
        if len(ex.candidates) == k:
            break
    return ex


def _order(graph, start, end, selected, fixed):
    items = list(range(len(selected)))
    coord = {("s",): graph.coords[start], ("e",): graph.coords[end]}
    order = order_stops(
        ("s",), ("e",), [(i,) for i in items], fixed,
        key=lambda item: coord[item] if item in coord else graph.coords[selected[item[0]].node],
    )
    return [selected[item[0]] for item in order[1:-1]]


def _select_pois(task, graph, catalog, state, start, end):
    req: PoiRequirement = task.payload
    pool: dict[str, PoiRecord] = {}
    try:
        for opt in req.options():
            extra = state.filters_for(opt.category)
            for rec in filter_pois(catalog, opt.category, (*opt.filters, *extra)):
                pool.setdefault(rec.id, rec)
    except PoiError as exc:
        return Infeasibility(task.id, str(exc))
    if not pool:
        return Infeasibility(task.id, f"no {'/'.join(o.category for o in req.options())} matches the filters")
    return rank(list(pool.values()), start, end, graph)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PlanResult:
    intent: ParsedIntent
    plan: Plan
    candidates: list[tuple[RouteSolution, Verdict]]
    chosen: int | None
    infeasibility: Infeasibility | None = None

    @property
    def feasible(self) -> bool:
        return self.infeasibility is None and any(v.ok for _, v in self.candidates)


def plan_route(
    intent: ParsedIntent,
    graph: RouteGraph,
    catalog: Sequence[PoiRecord],
    *,
    k: int = 3,
    epsilon: float = DEFAULT_EPSILON,
    scalarized: bool = False,
    speed: float = DEFAULT_SPEED,
    info_provider: InfoProvider = default_info,
    workers: int | None = None,
) -> PlanResult:
    """Plan, execute, verify and explain; the whole recommendation pipeline."""
    plan = build_plan(intent)
    opts = dict(k=k, epsilon=epsilon, scalarized=scalarized, info_provider=info_provider, workers=workers)
    ex = execute(plan, graph, catalog, **opts)
    if ex.infeasibility is not None:
        return PlanResult(intent, plan, [], None, ex.infeasibility)

    def make_replanner(index):
        choices = dict(ex.choices)

        def replan(sol: RouteSolution, round_no: int):
            # swap the selected POI of the most expensive requirement for the next-ranked one
            current = {i: ex.ranked[i][choices.get(i, 0)] for i in ex.ranked}
            if not current:
                return None
            worst = max(current, key=lambda i: (current[i].attrs.get("average_cost", 0), -i))
            choices[worst] = choices.get(worst, 0) + 1
            if choices[worst] >= len(ex.ranked[worst]):
                return None
            again = execute(plan, graph, catalog, choices=choices, **opts)
            if again.infeasibility is not None or not again.candidates:
                return None
            return again.candidates[min(index, len(again.candidates) - 1)]

        return replan

    verified = []
    seen = set()
    for i, sol in enumerate(ex.candidates):
        verdict, final = verify(sol, intent.globals, make_replanner(i), speed)
        # re-planning can move two candidates onto the same route
        if final.path in seen:
            continue
        seen.add(final.path)
        verified.append((final, verdict))
    rationales = explain([s for s, _ in verified])
    verified = [(replace(s, rationale=r), v) for (s, v), r in zip(verified, rationales)]
    chosen = next((i for i, (_, v) in enumerate(verified) if v.ok), 0) if verified else None
    return PlanResult(intent, plan, verified, chosen)
