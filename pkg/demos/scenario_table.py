"""Cost table for preference scenarios that share start and end.

    python3 demos/scenario_table.py
"""
from pathlib import Path

from intentroute.evalkit import load_scenarios, scenario_table, scenarios_text
from intentroute.mapenv import generate_grid_map
from intentroute.poicatalog import generate_pois

graph = generate_grid_map(seed=0)
pois = generate_pois(graph, seed=0)
scenarios = load_scenarios(Path(__file__).with_name("scenarios.json").read_text())
print(scenarios_text(scenario_table(graph, pois, scenarios)), end="")
