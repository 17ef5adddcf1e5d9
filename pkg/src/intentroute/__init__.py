"""Constraint-aware route recommendation from structured intents."""
from .intent import ParsedIntent, validate
from .mapenv import OBJECTIVES, RouteGraph, generate_grid_map, load_map, save_map
from .mosearch import SearchSpec, pareto_search, search_routes, shortest_path
from .orchestrator import build_plan, plan_route
from .parser import ParserBackend, parse
from .poicatalog import generate_pois, load_catalog, save_catalog

__version__ = "0.1.0"

__all__ = [
    "OBJECTIVES", "ParsedIntent", "ParserBackend", "RouteGraph", "SearchSpec", "build_plan",
    "generate_grid_map", "generate_pois", "load_catalog", "load_map", "parse", "pareto_search",
    "plan_route", "save_catalog", "save_map", "search_routes", "shortest_path", "validate",
]
