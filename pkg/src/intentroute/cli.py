"""Command-line entry point: ``intentroute <command> ...``.

Exit codes: 0 ok, 2 bad flags or unreadable inputs, 3 infeasible request
(diagnostics are still written), 4 parse failure, 5 transport failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import evalkit
from .intent import IntentValidationError, ParsedIntent, validate
from .mapenv import OBJECTIVES, MapError, generate_grid_map, load_map, save_map
from .mosearch import DEFAULT_EPSILON
from .orchestrator import PlanResult, plan_route
from .parser import DEFAULT_API_KEY_ENV, DEFAULT_RETRY_BUDGET, ParseContext, ParserBackend, TransportError, parse
from .poicatalog import PoiError, generate_pois, load_catalog, save_catalog
from .render import render_svg, to_geojson
from .verifier import option_label

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_TRANSPORT = 0, 2, 3, 4, 5

log = logging.getLogger("intentroute")


class UsageError(Exception):
    pass


class ParseFailure(Exception):
    pass


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, data: bytes | str):
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def _dump(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def _r(x: float) -> float:
    return round(float(x), 6)


# ---------------------------------------------------------------------------
# route result
# ---------------------------------------------------------------------------

def route_result(query: str | None, intent: ParsedIntent, result: PlanResult, timings=None) -> dict:
    """The RouteResult document written by ``route``."""
    candidates = []
    for i, (sol, verdict) in enumerate(result.candidates):
        candidates.append({
            "label": option_label(i),
            "path": list(sol.path),
            "cost": {k: _r(v) for k, v in sol.cost.as_dict().items()},
            "waypoints": [w.to_dict() for w in sol.waypoints],
            "pois": [p.to_dict() for p in sol.pois],
            "notes": list(sol.notes),
            "rationale": sol.rationale,
            "verdict": verdict.to_dict(),
        })
    doc = {
        "query": query,
        "intent": intent.to_dict(),
        "plan": {"layers": [list(layer) for layer in result.plan.layers]},
        "candidates": candidates,
        "chosen": result.chosen,
        "status": "ok" if result.feasible else "infeasible",
        "infeasibility": result.infeasibility.to_dict() if result.infeasibility else None,
    }
    if timings is not None:
        doc["timings"] = {k: round(v, 4) for k, v in timings.items()}
    return doc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_mapgen(args) -> int:
    if args.width < 2 or args.height < 2:
        raise UsageError("--width and --height must both be at least 2")
    try:
        graph = generate_grid_map(args.width, args.height, seed=args.seed, block_fraction=args.block_fraction)
    except MapError as exc:
        raise UsageError(str(exc)) from None
    _write(args.out, save_map(graph))
    return EXIT_OK


def _load_map(path):
    try:
        return load_map(_read(path))
    except MapError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_pois(path, graph):
    try:
        return load_catalog(_read(path), graph)
    except PoiError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_poigen(args) -> int:
    graph = _load_map(args.map)
    try:
        pois = generate_pois(graph, seed=args.seed)
    except PoiError as exc:
        raise UsageError(str(exc)) from None
    _write(args.out, save_catalog(pois, seed=args.seed))
    return EXIT_OK


def _backend(args) -> ParserBackend:
    if args.parser == "rule":
        return ParserBackend("rule")
    try:
        return ParserBackend(
            "remote", endpoint=args.endpoint, model=args.model, api_key_env=args.api_key_env,
            retry_budget=args.retries, timeout=args.timeout, transcript_path=args.transcript,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_query(query, args, ctx) -> ParsedIntent:
    outcome = parse(query, _backend(args), ctx)
    if not outcome.schema_valid:
        detail = "; ".join(str(v) for v in outcome.diagnostics)
        raise ParseFailure(f"could not parse query after {outcome.attempts} attempt(s): {detail}")
    return outcome.intent


def cmd_parse(args) -> int:
    ctx = ParseContext()
    if args.map:
        graph = _load_map(args.map)
        ctx = ParseContext(graph, _load_pois(args.pois, graph) if args.pois else ())
    intent = _parse_query(args.query, args, ctx)
    _write(args.out, intent.to_json())
    return EXIT_OK


def _load_intent(path) -> ParsedIntent:
    try:
        return validate(_read(path))
    except IntentValidationError as exc:
        raise ParseFailure(f"{path}: {exc}") from None


def cmd_route(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    if args.epsilon < 0:
        raise UsageError("--epsilon must be non-negative")
    graph = _load_map(args.map)
    pois = _load_pois(args.pois, graph)
    t0 = time.perf_counter()
    if args.intent:
        intent, query = _load_intent(args.intent), None
    else:
        intent, query = _parse_query(args.query, args, ParseContext(graph, pois)), args.query
    t1 = time.perf_counter()
    result = plan_route(intent, graph, pois, k=args.k, epsilon=args.epsilon,
                        scalarized=args.scalarized, speed=args.speed)
    t2 = time.perf_counter()
    timings = {"parse_s": t1 - t0, "plan_s": t2 - t1} if args.timings else None
    doc = route_result(query, intent, result, timings)
    _write(args.out, _dump(doc))
    if not result.feasible:
        reason = result.infeasibility.to_dict() if result.infeasibility else "global constraints violated"
        print(f"infeasible: {reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_render(args) -> int:
    if args.attr not in OBJECTIVES:
        raise UsageError(f"--attr must be one of {', '.join(OBJECTIVES)}")
    graph = _load_map(args.map)
    path, pois, start, end = (), (), None, None
    if args.route:
        try:
            doc = json.loads(_read(args.route))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.route}: not a route file ({exc})") from None
        cands = doc.get("candidates") or []
        if cands:
            idx = doc.get("chosen") if args.candidate is None else args.candidate
            if not 0 <= idx < len(cands):
                raise UsageError(f"--candidate must be in [0, {len(cands) - 1}]")
            cand = cands[idx]
            path = cand["path"]
            pois = [(p["id"], p["node"]) for p in cand["pois"]]
            start, end = cand["waypoints"][0]["node"], cand["waypoints"][-1]["node"]
        else:
            intent = doc["intent"]
            try:
                start, end = graph.node_at(*intent["start"]), graph.node_at(*intent["end"])
            except KeyError:
                pass
    if args.format == "geojson":
        _write(args.out, to_geojson(graph, path, pois, start, end, {"attr": args.attr}))
    else:
        _write(args.out, render_svg(graph, args.attr, path, pois, start, end))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        corpus = evalkit.load_corpus(args.queries)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load corpus: {exc}") from None
    backend = _backend(args)
    score, per_query = evalkit.evaluate(corpus, lambda text: parse(text, backend))
    report = {
        "parser": args.parser,
        "summary": score.to_dict(),
        "queries": [{"id": qid, "poi_f1": s.poi_f1, "const_f1": s.const_f1, "pref_f1": s.pref_f1,
                     "schema_valid": s.schema_valid} for qid, s in per_query],
    }
    if args.report:
        _write(args.report, _dump(report))
    sys.stdout.write(score.table(args.parser))
    return EXIT_OK


def cmd_scenarios(args) -> int:
    graph = _load_map(args.map)
    pois = _load_pois(args.pois, graph)
    try:
        scenarios = evalkit.load_scenarios(_read(args.scenarios))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{args.scenarios}: {exc}") from None
    try:
        rows = evalkit.scenario_table(graph, pois, scenarios)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(args.out, evalkit.scenarios_csv(rows))
    if args.out not in (None, "-"):
        sys.stdout.write(evalkit.scenarios_text(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parser_flags(p):
    p.add_argument("--parser", choices=("rule", "remote"), default="rule")
    p.add_argument("--endpoint", help="chat-completions URL for --parser remote")
    p.add_argument("--model", help="model name for --parser remote")
    p.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV, help="environment variable holding the API key")
    p.add_argument("--retries", type=int, default=DEFAULT_RETRY_BUDGET, help="attempts before giving up")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--transcript", help="append request/response records to this JSONL file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intentroute", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mapgen", help="generate a seeded grid map")
    p.add_argument("--width", type=int, default=50)
    p.add_argument("--height", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-fraction", type=float, default=0.02)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_mapgen)

    p = sub.add_parser("poigen", help="generate the 50-POI catalog for a map")
    p.add_argument("--map", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_poigen)

    p = sub.add_parser("parse", help="parse a query into an intent document")
    p.add_argument("--query", required=True)
    p.add_argument("--map")
    p.add_argument("--pois")
    _parser_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("route", help="parse, plan, search, verify and explain")
    p.add_argument("--map", required=True)
    p.add_argument("--pois", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--query")
    src.add_argument("--intent", help="intent JSON file; bypasses the parser")
    _parser_flags(p)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--scalarized", action="store_true", help="single weighted-sum route per segment")
    p.add_argument("--speed", type=float, default=1.0, help="distance units per time unit for total_time")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings (breaks byte-determinism)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("render", help="SVG heatmap (or GeoJSON) with the route overlaid")
    p.add_argument("--map", required=True)
    p.add_argument("--route")
    p.add_argument("--attr", default="dist")
    p.add_argument("--candidate", type=int)
    p.add_argument("--format", choices=("svg", "geojson"), default="svg")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score a parser against a JSONL query corpus")
    p.add_argument("--queries", help="JSONL corpus (default: bundled 20-query set)")
    _parser_flags(p)
    p.add_argument("--report", help="write the JSON score report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("scenarios", help="cost table for preference scenarios")
    p.add_argument("--map", required=True)
    p.add_argument("--pois", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_scenarios)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseFailure as exc:
        print(f"parse failure: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except TransportError as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
