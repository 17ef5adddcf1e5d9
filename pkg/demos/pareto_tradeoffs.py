"""How the eps setting trades front size for search effort on a 50x30 map.

    python3 demos/pareto_tradeoffs.py
"""
import time

from intentroute.mapenv import generate_grid_map
from intentroute.mosearch import SearchSpec, pareto_search

graph = generate_grid_map(seed=0)
s, t = graph.node_at(2, 3), graph.node_at(46, 26)
active = ("dist", "scenic", "toll")

print(f"{'eps':>5} {'routes':>7} {'seconds':>8}   cheapest dist / scenic / toll")
for eps in (0.3, 0.2, 0.1, 0.05):
    t0 = time.perf_counter()
    front = pareto_search(graph, s, t, SearchSpec(active, dict.fromkeys(active, 1.0), epsilon=eps))
    dt = time.perf_counter() - t0
    best = min(r.cost.dist for r in front)
    low_scenic = min(r.cost.scenic for r in front)
    low_toll = min(r.cost.toll for r in front)
    print(f"{eps:>5} {len(front):>7} {dt:>8.2f}   {best:.2f} / {low_scenic:.2f} / {low_toll:.2f}")
