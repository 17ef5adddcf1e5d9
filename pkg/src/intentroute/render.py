"""SVG heatmaps with a route overlay, and GeoJSON export."""
from __future__ import annotations

import json
from typing import Sequence
from xml.sax.saxutils import escape

from .mapenv import OBJECTIVES, RouteGraph

CELL = 16
MARGIN = 8
LOW = (236, 236, 236)   # light grey
HIGH = (215, 48, 39)    # warm red
PATH_COLOR = "#1f4e9c"


def node_values(graph: RouteGraph, attr: str) -> list[float]:
    """Mean ``attr`` over each node's passable incident edges (0 if none)."""
    if attr not in OBJECTIVES:
        raise ValueError(f"unknown attribute {attr!r}; expected one of {OBJECTIVES}")
    i = OBJECTIVES.index(attr)
    total = [0.0] * graph.num_nodes
    count = [0] * graph.num_nodes
    for (u, v), edge in graph.edges.items():
        if not edge.passable:
            continue
        for n in (u, v):
            total[n] += edge.cost[i]
            count[n] += 1
    return [t / c if c else 0.0 for t, c in zip(total, count)]


def ramp(t: float) -> str:
    t = min(1.0, max(0.0, t))
    r, g, b = (round(lo + (hi - lo) * t) for lo, hi in zip(LOW, HIGH))
    return f"#{r:02x}{g:02x}{b:02x}"


def _normalise(values):
    lo, hi = min(values), max(values)
    span = hi - lo
    return [0.0 if span <= 1e-12 else (v - lo) / span for v in values]


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def render_svg(
    graph: RouteGraph,
    attr: str,
    path: Sequence[int] = (),
    pois: Sequence[tuple[str, int]] = (),
    start: int | None = None,
    end: int | None = None,
    title: str | None = None,
) -> str:
    """Heatmap of ``attr`` with the route, POIs and endpoints on top.

    Output depends only on the arguments, so equal inputs give equal bytes.
    """
    values = _normalise(node_values(graph, attr))
    xs = [c[0] for c in graph.coords]
    ys = [c[1] for c in graph.coords]
    min_x, min_y = min(xs), min(ys)
    span_x, span_y = max(xs) - min_x, max(ys) - min_y
    scale = CELL if graph.mode == "grid" else CELL * max(1.0, 50.0 / max(span_x, span_y, 1e-9))

    def px(node):
        x, y = graph.coords[node]
        return MARGIN + (x - min_x) * scale + scale / 2, MARGIN + (y - min_y) * scale + scale / 2

    width = 2 * MARGIN + (span_x + 1) * scale
    height = 2 * MARGIN + (span_y + 1) * scale
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f"<title>{escape(title or f'{attr} cost')}</title>",
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<g id="heatmap" data-attr="{attr}">',
    ]
    if graph.mode == "grid":
        for node, t in enumerate(values):
            x, y = graph.coords[node]
            out.append(
                f'<rect x="{_fmt(MARGIN + (x - min_x) * scale)}" y="{_fmt(MARGIN + (y - min_y) * scale)}" '
                f'width="{_fmt(scale)}" height="{_fmt(scale)}" fill="{ramp(t)}"/>'
            )
    else:
        i = OBJECTIVES.index(attr)
        edge_vals = _normalise([e.cost[i] for e in graph.edges.values()] or [0.0])
        for ((u, v), edge), t in zip(graph.edges.items(), edge_vals):
            (x1, y1), (x2, y2) = px(u), px(v)
            dash = "" if edge.passable else ' stroke-dasharray="3 3"'
            out.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
                       f'stroke="{ramp(t)}" stroke-width="3"{dash}/>')
    out.append("</g>")
    if len(path) > 1:
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in map(px, path))
        out.append(f'<polyline id="route" points="{pts}" fill="none" stroke="{PATH_COLOR}" '
                   f'stroke-width="3" stroke-linejoin="round" stroke-linecap="round"/>')
    out.append('<g id="markers" font-family="sans-serif" font-size="10">')
    for poi_id, node in pois:
        x, y = px(node)
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="5" fill="#ffd23f" stroke="#000000"/>')
        out.append(f'<text x="{_fmt(x + 7)}" y="{_fmt(y - 6)}">{escape(poi_id)}</text>')
    for label, node, color in (("S", start, "#2a9d3a"), ("E", end, "#000000")):
        if node is None:
            continue
        x, y = px(node)
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="6" fill="{color}"/>')
        out.append(f'<text x="{_fmt(x + 8)}" y="{_fmt(y + 4)}" font-weight="bold">{label}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def to_geojson(
    graph: RouteGraph,
    path: Sequence[int] = (),
    pois: Sequence[tuple[str, int]] = (),
    start: int | None = None,
    end: int | None = None,
    properties: dict | None = None,
) -> str:
    """Route, POIs and endpoints as a GeoJSON FeatureCollection (x, y as lon, lat)."""
    def pt(node):
        x, y = graph.coords[node]
        return [x, y]

    features = []
    if len(path) > 1:
        features.append({"type": "Feature", "properties": dict(properties or {}, role="route"),
                         "geometry": {"type": "LineString", "coordinates": [pt(n) for n in path]}})
    for poi_id, node in pois:
        features.append({"type": "Feature", "properties": {"role": "poi", "id": poi_id},
                         "geometry": {"type": "Point", "coordinates": pt(node)}})
    for role, node in (("start", start), ("end", end)):
        if node is not None:
            features.append({"type": "Feature", "properties": {"role": role},
                             "geometry": {"type": "Point", "coordinates": pt(node)}})
    return json.dumps({"type": "FeatureCollection", "features": features}, sort_keys=True, indent=1) + "\n"
