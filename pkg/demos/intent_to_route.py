"""One query through the whole pipeline: parse, plan, search, verify, explain.

    python3 demos/intent_to_route.py [out.svg]
"""
import sys

from intentroute.orchestrator import plan_route
from intentroute.mapenv import generate_grid_map
from intentroute.parser import parse
from intentroute.poicatalog import generate_pois
from intentroute.render import render_svg

QUERY = ("From (3,4) to (44,26): first a coffee shop, then either an Italian restaurant rated at least 4.0 "
         "or a park. I'd prefer scenic streets and must avoid tolls. My total budget is $40. Check the weather.")

graph = generate_grid_map(seed=5)
pois = generate_pois(graph, seed=5)
outcome = parse(QUERY)
intent = outcome.intent
print("query:", QUERY)
print("stops:", [s.category for s in intent.poi_stops], "prefs:", intent.soft_prefs.nonzero())
print("constraints:", [c.to_dict() for c in intent.hard_constraints], [g.to_dict() for g in intent.globals])

result = plan_route(intent, graph, pois, k=3)
print("plan layers:", result.plan.layers)
if result.infeasibility:
    print("infeasible:", result.infeasibility.to_dict())
    sys.exit(3)
for sol, verdict in result.candidates:
    print(f"\n{sol.rationale}\n  status: {verdict.status}; stops: {[p.id for p in sol.pois]}")
    for note in sol.notes + verdict.notes:
        print("  note:", note)

if len(sys.argv) > 1:
    sol = result.candidates[result.chosen][0]
    svg = render_svg(graph, "scenic", sol.path, [(p.id, p.node) for p in sol.pois],
                     sol.waypoints[0].node, sol.waypoints[-1].node, title=QUERY)
    with open(sys.argv[1], "w", encoding="utf-8") as fh:
        fh.write(svg)
    print("\nwrote", sys.argv[1])
