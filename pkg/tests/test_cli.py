import json

import pytest

from intentroute.cli import main
from intentroute.mapenv import CostVector, Edge, RouteGraph, load_map, save_map
from intentroute.parser import parse
from intentroute.poicatalog import load_catalog, save_catalog

from conftest import corridor_map


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    assert main(["mapgen", "--seed", "3", "--out", str(d / "map.json")]) == 0
    assert main(["poigen", "--map", str(d / "map.json"), "--seed", "3", "--out", str(d / "pois.json")]) == 0
    return d


def run(*argv):
    return main([str(a) for a in argv])


def test_mapgen_defaults_and_determinism(world, tmp_path):
    g = load_map((world / "map.json").read_bytes())
    assert (g.width, g.height) == (50, 30)
    run("mapgen", "--seed", 3, "--out", tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == (world / "map.json").read_bytes()
    assert len(load_catalog((world / "pois.json").read_bytes(), g)) == 50


def test_mapgen_too_small(capsys):
    assert run("mapgen", "--width", 1, "--height", 1) == 2
    assert "at least 2" in capsys.readouterr().err


def test_two_node_map(tmp_path):
    g = RouteGraph("free", ((0.0, 0.0), (1.0, 0.0)), {(0, 1): Edge(CostVector(1, .1, .1, .1, .1, .1))})
    (tmp_path / "m.json").write_bytes(save_map(g))
    (tmp_path / "p.json").write_bytes(save_catalog([], 0))
    out = tmp_path / "r.json"
    assert run("route", "--map", tmp_path / "m.json", "--pois", tmp_path / "p.json",
               "--query", "shortest route from (0,0) to (1,0)", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert len(doc["candidates"]) == 1 and doc["candidates"][0]["path"] == [0, 1]
    assert doc["status"] == "ok" and doc["chosen"] == 0


def test_scenic_query_uses_corridor(tmp_path):
    g = corridor_map()
    (tmp_path / "m.json").write_bytes(save_map(g))
    (tmp_path / "p.json").write_bytes(save_catalog([], 0))
    out = tmp_path / "r.json"
    run("route", "--map", tmp_path / "m.json", "--pois", tmp_path / "p.json", "--k", 1,
        "--query", "from (0,2) to (9,2), prefer scenic streets", "--out", out)
    path = json.loads(out.read_text())["candidates"][0]["path"]
    assert any(g.coords[n][1] >= 4 for n in path)


QUERY = "From (2,2) to (40,25), visit a coffee shop and then a park. I'd prefer scenic streets."


def test_intent_equals_parsed_query(world, tmp_path):
    common = ["route", "--map", world / "map.json", "--pois", world / "pois.json"]
    assert run(*common, "--query", QUERY, "--out", tmp_path / "a.json") == 0
    (tmp_path / "intent.json").write_bytes(parse(QUERY).intent.to_json())
    assert run(*common, "--intent", tmp_path / "intent.json", "--out", tmp_path / "b.json") == 0
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert a.pop("query") == QUERY and b.pop("query") is None
    assert a == b


def test_route_deterministic_and_render(world, tmp_path):
    common = ["route", "--map", world / "map.json", "--pois", world / "pois.json", "--query", QUERY]
    outs = []
    for i in range(2):
        run(*common, "--out", tmp_path / f"r{i}.json")
        outs.append((tmp_path / f"r{i}.json").read_bytes())
    assert outs[0] == outs[1]
    svgs = []
    for i in range(2):
        assert run("render", "--map", world / "map.json", "--route", tmp_path / "r0.json", "--attr", "scenic",
                   "--out", tmp_path / f"s{i}.svg") == 0
        svgs.append((tmp_path / f"s{i}.svg").read_bytes())
    assert svgs[0] == svgs[1] and b'id="route"' in svgs[0]
    assert run("render", "--map", world / "map.json", "--route", tmp_path / "r0.json", "--candidate", 9) == 2
    assert run("render", "--map", world / "map.json", "--attr", "fun") == 2
    assert run("render", "--map", world / "map.json", "--route", tmp_path / "r0.json", "--format", "geojson",
               "--out", tmp_path / "g.json") == 0
    assert json.loads((tmp_path / "g.json").read_text())["type"] == "FeatureCollection"


def test_infeasible_exit_3(world, tmp_path):
    out = tmp_path / "r.json"
    code = run("route", "--map", world / "map.json", "--pois", world / "pois.json",
               "--query", "From (0,0) to (10,10), visit a gym rated at least 5.0", "--out", out)
    doc = json.loads(out.read_text())
    if doc["infeasibility"] is None:
        pytest.skip("catalog happens to contain a 5.0 gym")
    assert code == 3 and doc["status"] == "infeasible" and doc["infeasibility"]["task"] == "poi:0"


def test_parse_failure_exit_4(world, capsys):
    assert run("route", "--map", world / "map.json", "--pois", world / "pois.json",
               "--query", "somewhere nice please") == 4
    assert "parse failure" in capsys.readouterr().err


def test_bad_intent_file_exit_4(world, tmp_path):
    (tmp_path / "i.json").write_text('{"start": [0, 0]}')
    assert run("route", "--map", world / "map.json", "--pois", world / "pois.json",
               "--intent", tmp_path / "i.json") == 4


def test_transport_failure_exit_5(world):
    assert run("parse", "--query", "from (0,0) to (1,1)", "--parser", "remote", "--endpoint",
               "http://127.0.0.1:9/v1/chat/completions", "--model", "m", "--retries", 1, "--timeout", 2) == 5


def test_missing_inputs_exit_2(world, tmp_path):
    assert run("route", "--map", tmp_path / "nope.json", "--pois", world / "pois.json", "--query", QUERY) == 2
    assert run("route", "--map", world / "map.json", "--pois", world / "pois.json", "--query", QUERY,
               "--k", 0) == 2
    assert run("parse", "--query", "x", "--parser", "remote") == 2
    with pytest.raises(SystemExit) as info:
        run("route", "--map", world / "map.json")
    assert info.value.code == 2


def test_parse_command(capsysbinary):
    assert run("parse", "--query", QUERY) == 0
    assert capsysbinary.readouterr().out == parse(QUERY).intent.to_json()


def test_eval_command(tmp_path, capsys):
    assert run("eval", "--report", tmp_path / "rep.json") == 0
    assert "Overall" in capsys.readouterr().out
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["summary"]["n"] == 20 and rep["summary"]["struct_rate"] == 1.0


def test_scenarios_command(tmp_path, capsys):
    g = corridor_map()
    (tmp_path / "m.json").write_bytes(save_map(g))
    (tmp_path / "p.json").write_bytes(save_catalog([], 0))
    doc = {"base": parse("from (0,2) to (9,2)").intent.to_dict(),
           "scenarios": [{"name": "baseline", "soft_prefs": {}}, {"name": "scenic", "soft_prefs": {"scenic": 0.5}}]}
    (tmp_path / "s.json").write_text(json.dumps(doc))
    assert run("scenarios", "--map", tmp_path / "m.json", "--pois", tmp_path / "p.json",
               "--scenarios", tmp_path / "s.json", "--out", tmp_path / "t.csv") == 0
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("scenario,cost_danger") and len(lines) == 3
    assert "baseline" in capsys.readouterr().out
