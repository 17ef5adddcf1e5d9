import json
import threading

import pytest

from intentroute.evalkit import load_corpus
from intentroute.intent import avoid_above
from intentroute.parser import (
    ParseContext,
    ParseOutcome,
    ParserBackend,
    TransportError,
    build_prompt,
    extract_preferences,
    parse,
    rule_document,
)
from intentroute.poicatalog import AttrFilter


# -- preferences -------------------------------------------------------------

def test_pref_examples():
    assert extract_preferences("I must avoid tolls")["toll"] == 1
    assert extract_preferences("prefer scenic streets")["scenic"] == 0.5
    assert extract_preferences("").to_dict() == dict.fromkeys(extract_preferences("").weights, 0)


def test_hedge_beats_strong_marker():
    assert extract_preferences("I really need to avoid steep hills")["slope"] == 1
    assert extract_preferences("I'd really prefer to avoid steep hills")["slope"] == 0.5


def test_negation_zeroes_following_features():
    p = extract_preferences("I want it safe but don't care about tolls")
    assert p["danger"] == 0.5 and p["toll"] == 0


def test_highest_level_across_clauses():
    p = extract_preferences("prefer scenic streets. I must have scenic streets")
    assert p["scenic"] == 1


# -- rule backend -------------------------------------------------------------

def test_minimal_query():
    out = parse("shortest route from (0,0) to (49,29)")
    it = out.intent
    assert out.schema_valid and out.attempts == 1
    assert (it.start, it.end, it.loop) == ((0, 0), (49, 29), False)
    assert it.poi_stops == () and not it.soft_prefs.nonzero()


def test_italian_restaurant_query():
    it = parse("from (2,3) to (20,10) visit an Italian restaurant rated at least 4.0, prefer scenic streets").intent
    (stop,) = it.poi_stops
    assert stop.category == "restaurant"
    assert set(stop.filters) == {AttrFilter("cuisine", "eq", "Italian"), AttrFilter("rating", "ge", 4.0)}
    assert it.soft_prefs.nonzero() == {"scenic": 0.5}


def test_constraints_and_globals():
    it = parse("From (1,1) to (30,20), avoid roads with toll above 0.6. My total budget is $40, a hard limit. "
               "Also check the weather.").intent
    assert it.hard_constraints == (avoid_above("toll", 0.6),)
    (g,) = it.globals
    assert (g.metric, g.threshold, g.critical) == ("total_budget", 40, True)
    assert [s.topic for s in it.specials] == ["weather"]


def test_closure_is_modify_special():
    it = parse("From (0,0) to (9,9). The road between (3,3) and (4,3) is closed.").intent
    (s,) = it.specials
    assert s.mode == "modify" and s.hard_constraints()[0].kind == "forbid_edges"


def test_loop_and_single_coordinate():
    assert parse("a loop from (5,5) past a park").intent.loop
    it = parse("walk from (5,5) to a park").intent
    assert it.loop and it.end == (5, 5)


def test_either_or_and_pins():
    it = parse("From (0,0) to (20,20): first a coffee shop, then either a gym with a pool or a park").intent
    assert it.poi_stops[0].category == "coffee_shop" and it.poi_stops[0].fixed_position == 0
    gym = it.poi_stops[1]
    assert gym.category == "gym"
    assert [a.category for a in gym.alternatives] == ["park"]


def test_rule_is_pure_and_reports_grammar_failure():
    q = "from (2,3) to (20,10) visit an Italian restaurant"
    assert parse(q) == parse(q)
    bad = parse("take me somewhere nice")
    assert not bad.schema_valid and bad.intent is None
    assert bad.diagnostics[0].rule == "grammar"


def test_empty_query_rejected():
    with pytest.raises(ValueError):
        parse("   ")


def test_rule_valid_on_whole_corpus():
    for q in load_corpus():
        assert parse(q.text).schema_valid, q.id


def test_outcome_invariant():
    with pytest.raises(ValueError):
        ParseOutcome(None, 1, True)
    with pytest.raises(ValueError):
        ParseOutcome(None, 0, False)


# -- remote backend ------------------------------------------------------------

GOOD = rule_document("shortest route from (0,0) to (49,29)")


def reply(obj):
    text = obj if isinstance(obj, str) else json.dumps(obj)
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


class FakeTransport:
    def __init__(self, *replies):
        self.replies = list(replies)
        self.bodies = []

    def __call__(self, url, headers, body, timeout):
        self.bodies.append(body)
        r = self.replies.pop(0)
        if isinstance(r, Exception):
            raise r
        return r


def remote(transport, **kw):
    return ParserBackend("remote", endpoint="http://localhost:1/v1/chat/completions", model="m",
                         transport=transport, **kw)


def test_missing_field_triggers_retry_with_violations():
    missing = {k: v for k, v in GOOD.items() if k != "soft_prefs"}
    fake = FakeTransport(reply(missing), reply(GOOD))
    out = parse("shortest route from (0,0) to (49,29)", remote(fake))
    assert out.schema_valid and out.attempts == 2
    repair = fake.bodies[1]["messages"][-1]["content"]
    assert "failed validation" in repair and "soft_prefs" in repair
    assert fake.bodies[0]["temperature"] == 0


def test_fenced_json_accepted():
    out = parse("q", remote(FakeTransport(reply("```json\n" + json.dumps(GOOD) + "\n```"))))
    assert out.schema_valid and out.attempts == 1


def test_budget_exhausted_keeps_diagnostics():
    fake = FakeTransport(*[reply("not json")] * 3)
    out = parse("q", remote(fake))
    assert not out.schema_valid and out.intent is None and out.attempts == 3
    assert out.diagnostics[0].rule == "json"
    assert len(fake.bodies) == 3


def test_transport_failure_raises():
    fake = FakeTransport(*[TransportError("down")] * 2)
    with pytest.raises(TransportError, match="gave up after 2"):
        parse("q", remote(fake, retry_budget=2))


def test_transport_recovers():
    out = parse("q", remote(FakeTransport(TransportError("blip"), reply(GOOD))))
    assert out.schema_valid and out.attempts == 2


def test_bad_shape_is_transport_error():
    with pytest.raises(TransportError):
        parse("q", remote(FakeTransport({"oops": 1}), retry_budget=1))


def test_transcript_written(tmp_path):
    path = tmp_path / "t.jsonl"
    parse("q", remote(FakeTransport(reply("{}"), reply(GOOD)), transcript_path=str(path)))
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert [x["attempt"] for x in lines] == [1, 2]
    assert lines[0]["violations"] and lines[1]["violations"] == []


def test_api_key_header(monkeypatch):
    seen = {}

    def transport(url, headers, body, timeout):
        seen.update(headers)
        return reply(GOOD)

    monkeypatch.setenv("INTENTROUTE_API_KEY", "sekrit")
    parse("q", remote(transport))
    assert seen["Authorization"] == "Bearer sekrit"


def test_in_flight_limit():
    live, peak, lock = [0], [0], threading.Lock()
    gate = threading.Event()

    def transport(url, headers, body, timeout):
        with lock:
            live[0] += 1
            peak[0] = max(peak[0], live[0])
        gate.wait(0.05)
        with lock:
            live[0] -= 1
        return reply(GOOD)

    backend = ParserBackend("remote", endpoint="http://limit.test/", model="m", transport=transport, max_in_flight=2)
    threads = [threading.Thread(target=parse, args=("q", backend)) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2


def test_prompt_sections(grid50, pois50):
    prompt = build_prompt(ParseContext(grid50, pois50))
    for tag in ("CONTEXT", "SCHEMA_AND_RULES", "INSTRUCTIONS", "POI_SPECIFICATION", "FEW_SHOT_EXAMPLES"):
        assert f"<{tag}>" in prompt and f"</{tag}>" in prompt
    assert "50 x 30 grid" in prompt and "20 restaurant" in prompt


def test_backend_validation():
    with pytest.raises(ValueError):
        ParserBackend("remote", model="m")
    with pytest.raises(ValueError):
        ParserBackend("oracle")


def test_markers_scope_over_and_segments():
    assert extract_preferences("I'd prefer scenic streets and must avoid tolls").nonzero() == {"scenic": 0.5, "toll": 1}
    assert extract_preferences("I must avoid tolls and steep hills").nonzero() == {"toll": 1, "slope": 1}
    assert extract_preferences("safe please but don't care about tolls and hills").nonzero() == {"danger": 0.5}
