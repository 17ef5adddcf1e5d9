"""Free text -> ParsedIntent.

Two interchangeable backends: a deterministic rule grammar that covers the
benchmark query templates, and a chat-completions client that validates each
reply and re-prompts with the violation list.
"""
from __future__ import annotations

import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .intent import IntentValidationError, ParsedIntent, PreferenceVector, Violation, schema_document, validate
from .mapenv import ATTRIBUTES, OBJECTIVES, RouteGraph
from .poicatalog import CATEGORIES, CUISINES, SCHEMAS, PoiRecord

log = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 3
DEFAULT_API_KEY_ENV = "INTENTROUTE_API_KEY"


class ParseError(ValueError):
    """The rule grammar could not make sense of the query."""


class TransportError(RuntimeError):
    """The remote endpoint could not be reached or answered garbage."""


# ---------------------------------------------------------------------------
# preferences
# ---------------------------------------------------------------------------

PREF_KEYWORDS = {
    "dist": (r"as short as possible", r"shortest possible", r"keep it short"),
    "scenic": (r"scenic", r"scenery", r"nice views?", r"beautiful"),
    "energy": (r"energy[- ]efficient", r"energy", r"save battery"),
    "danger": (r"safe", r"safer", r"safest", r"safety", r"well[- ]lit", r"dangerous"),
    "slope": (r"steep", r"hills?", r"hilly", r"slopes?", r"flat"),
    "toll": (r"tolls?", r"toll roads?"),
}
STRONG_MARKERS = (r"must", r"really need", r"have to", r"absolutely", r"need to", r"strictly", r"at all costs")
HEDGED_MARKERS = (r"prefer", r"would like", r"i'd like", r"ideally", r"if possible", r"rather", r"would be nice")
NEGATIONS = (r"don't care about", r"do not care about", r"regardless of", r"not worried about", r"no preference (?:on|about)")

_CLAUSE_SPLIT = re.compile(r"[.;!?,]")
# keep the separator inside the pieces so offsets stay aligned with the clause
_SEGMENT_SPLIT = re.compile(r"(?=\b(?:and|but)\b)")


def _any(patterns, text):
    return any(re.search(rf"\b{p}\b", text) for p in patterns)


def _feature_hits(clause):
    for name, pats in PREF_KEYWORDS.items():
        for p in pats:
            m = re.search(rf"\b{p}\b", clause)
            if m:
                yield name, m.start()
                break


def _marker_level(segment):
    strong = _any(STRONG_MARKERS, segment)
    hedged = _any(HEDGED_MARKERS, segment)
    if not strong and not hedged:
        return None
    # "I'd really prefer" stays a hedge
    return 1 if strong and not hedged else 0.5


def extract_preferences(query: str) -> PreferenceVector:
    """Keyword rules, clause by clause.

    A feature mentioned with a strong marker gets 1; any other mention gets
    0.5 (hedged markers make that explicit); a negated mention ("don't care
    about tolls") and silence both leave 0. Markers scope over the and/but
    segment they sit in and carry forward into following segments that have
    none ("must avoid tolls and hills"). Across clauses the highest level wins.
    """
    weights = {name: 0 for name in OBJECTIVES}
    for clause in _CLAUSE_SPLIT.split(query.lower()):
        if not clause.strip():
            continue
        negated_from = None
        for p in NEGATIONS:
            m = re.search(rf"\b{p}\b", clause)
            if m:
                negated_from = m.end() if negated_from is None else min(negated_from, m.end())
        level = 0.5
        offset = 0
        for segment in _SEGMENT_SPLIT.split(clause):
            own = _marker_level(segment)
            level = own if own is not None else level
            for name, pos in _feature_hits(segment):
                if negated_from is not None and offset + pos >= negated_from:
                    continue
                weights[name] = max(weights[name], level)
            offset += len(segment)
    return PreferenceVector(weights)


# ---------------------------------------------------------------------------
# rule grammar
# ---------------------------------------------------------------------------

NUM = r"(\d+(?:\.\d+)?)"
COORD = r"\(\s*(\d+)\s*,\s*(\d+)\s*\)"
ATTR_WORDS = {
    "scenic": "scenic", "scenery": "scenic", "energy": "energy", "danger": "danger",
    "dangerous": "danger", "slope": "slope", "steepness": "slope", "toll": "toll",
}
_ATTR = r"(scenic|scenery|energy|danger|dangerous|slope|steepness|toll)"

AVOID_RE = re.compile(
    rf"\b(?:avoid|never use|stay off|skip)\s+(?:any\s+|all\s+)?(?:roads?|streets?|edges?|segments?)\s+"
    rf"(?:with|whose|where)\s+(?:the\s+)?{_ATTR}\s+(?:cost\s+|level\s+|score\s+)?(?:is\s+)?"
    rf"(?:above|over|higher than|exceeding|greater than)\s+{NUM}"
)
REQUIRE_RE = re.compile(
    rf"\b(?:only use|keep to|stick to|use only)\s+(?:roads?|streets?|edges?|segments?)\s+"
    rf"(?:with|whose|where)\s+(?:the\s+)?{_ATTR}\s+(?:cost\s+|level\s+|score\s+)?(?:is\s+)?"
    rf"(?:below|under|less than|lower than)\s+{NUM}"
)
FORBID_RE = re.compile(
    rf"\b(?:avoid|do not use|don't use|never use|skip)\s+the\s+(?:road|street|segment|edge)\s+"
    rf"(?:between|from)\s+{COORD}\s+(?:and|to)\s+{COORD}"
)
CLOSURE_RE = re.compile(
    rf"\bthe\s+(?:road|street|segment|edge)\s+(?:between|from)\s+{COORD}\s+(?:and|to)\s+{COORD}\s+"
    rf"(?:is|will be)\s+(?:closed|blocked)"
)
BUDGET_RE = re.compile(
    r"\b(?:total\s+)?budget\s+(?:is\s+|of\s+)?(?:around\s+|about\s+|at most\s+|under\s+)?\$\s?(\d+(?:\.\d+)?)"
    r"|\bspend\s+(?:at most|no more than|under|less than)\s+\$\s?(\d+(?:\.\d+)?)\s+in total"
)
DIST_RE = re.compile(
    rf"\b(?:total distance|total walk|walk(?:ing)?)\s+(?:under|below|no more than|at most|of at most)\s+{NUM}"
)
TIME_RE = re.compile(rf"\b(?:within|in under|total time under|total time of at most)\s+{NUM}\s+minutes")
CRITICAL_RE = re.compile(r"\b(?:strict|hard limit|cannot exceed|must not exceed|can't exceed|firm)\b")

INFO_TOPICS = {
    "weather": re.compile(r"\b(?:weather|rain|raining|forecast|snow)\b"),
    "traffic": re.compile(r"\btraffic\b"),
    "events": re.compile(r"\b(?:events?|festival|concert)\b"),
}

CATEGORY_RE = {
    "restaurant": r"restaurants?|place to eat",
    "coffee_shop": r"coffee shops?|caf[eé]s?|coffee place",
    "gym": r"gyms?|fitness (?:center|studio)",
    "park": r"parks?",
}
_MENTION = re.compile("|".join(f"(?P<{cat}>\\b(?:{pat})\\b)" for cat, pat in CATEGORY_RE.items()))
_CUISINE = re.compile(r"\b(" + "|".join(c.lower() for c in CUISINES) + r")\b")
_PRE_WORDS = 4
_PIN_WORDS = 8


def _num(text):
    x = float(text)
    return int(x) if x.is_integer() else x


def _clause_of(text, pos):
    """Text of the clause containing ``pos`` (bounded by . ; ! ?)."""
    start = max(text.rfind(ch, 0, pos) for ch in ".;!?") + 1
    ends = [i for i in (text.find(ch, pos) for ch in ".;!?") if i >= 0]
    return text[start:min(ends) if ends else len(text)]


def _blank(text, span):
    a, b = span
    return text[:a] + " " * (b - a) + text[b:]


def _clock(hour, minute, ampm):
    h, m = int(hour), int(minute or 0)
    if ampm == "pm" and h < 12:
        h += 12
    elif ampm == "am" and h == 12:
        h = 0
    return f"{h:02d}:{m:02d}"


def _post_filters(category, text):
    schema = SCHEMAS[category]
    out = []
    m = re.search(rf"\b(?:rated|rating of|with a rating of|rating of at least)\s+(?:at least\s+)?{NUM}", text) or \
        re.search(rf"\b(?:at least\s+)?{NUM}\s*\+?\s*stars?", text)
    if m and "rating" in schema:
        out.append({"field": "rating", "op": "ge", "value": _num(m.group(1))})
    m = re.search(r"\b(?:under|below|less than|at most|no more than|cheaper than)\s+\$\s?(\d+)", text)
    if m and "average_cost" in schema:
        out.append({"field": "average_cost", "op": "le", "value": int(m.group(1))})
    m = re.search(r"\bopen at\s+(\d{1,2})(?::(\d{2}))?\s*(am|pm)?", text)
    if m and "opening_hours" in schema:
        out.append({"field": "opening_hours", "op": "open_at", "value": _clock(*m.groups())})
    return out


def _adjective_filters(category, text):
    schema = SCHEMAS[category]
    out = []
    m = _CUISINE.search(text)
    if m and "cuisine" in schema:
        out.append({"field": "cuisine", "op": "eq", "value": m.group(1).capitalize()})
    if "is_vegetarian_friendly" in schema and re.search(r"\bvegetarian", text):
        out.append({"field": "is_vegetarian_friendly", "op": "eq", "value": True})
    if "is_work_friendly" in schema and re.search(
        r"\b(?:work[- ]friendly|good for working|laptop[- ]friendly|with wifi|quiet)\b", text
    ):
        out.append({"field": "is_work_friendly", "op": "eq", "value": True})
    if "has_swimming_pool" in schema and re.search(r"\b(?:swimming )?pool\b", text):
        out.append({"field": "has_swimming_pool", "op": "eq", "value": True})
    if "has_entry_fee" in schema and re.search(r"\b(?:free entry|no entry fee|free to enter|free admission)\b", text):
        out.append({"field": "has_entry_fee", "op": "eq", "value": False})
    return out


def _merge_filters(*groups):
    seen, out = set(), []
    for group in groups:
        for f in group:
            key = f["field"]
            if key not in seen:
                seen.add(key)
                out.append(f)
    return out


_BOUNDARY = {"and", "or", "then", "either", "after", "before", "also", "plus", "visit", "at"}


def _split_gap(gap):
    """Split the text between two mentions into (tail of the previous
    mention, pre-modifiers of the next one). Pre-modifiers are at most four
    words back, stopping at punctuation or a connective."""
    words = gap.split()
    k = len(words)
    while k > 0 and len(words) - k < _PRE_WORDS:
        w = words[k - 1]
        if w.strip(".,;:!?") in _BOUNDARY or w[-1] in ".,;:!?":
            break
        k -= 1
    return " ".join(words[:k]), " ".join(words[k:])


def _stops(text):
    mentions = list(_MENTION.finditer(text))
    stops = []
    gaps = [text[(mentions[i - 1].end() if i else 0):m.start()] for i, m in enumerate(mentions)]
    gaps.append(text[mentions[-1].end():] if mentions else "")
    for i, m in enumerate(mentions):
        category = m.lastgroup
        gap_words = gaps[i].split()
        _, pre = _split_gap(gaps[i])
        post, _ = _split_gap(gaps[i + 1]) if i + 1 < len(mentions) else (gaps[i + 1], "")
        pin_zone = " ".join(gap_words[-_PIN_WORDS:])
        # "either A or B": B joins A's group instead of becoming a new stop
        joined = bool(stops) and stops[-1]["_either"] and re.search(r"\bor\b", " ".join(gap_words[-4:]))
        filters = _merge_filters(_adjective_filters(category, pre), _adjective_filters(category, post),
                                 _post_filters(category, post))
        entry = {"category": category, "filters": filters}
        if joined:
            stops[-1].setdefault("alternatives", []).append(entry)
        else:
            pin = None
            if re.search(r"\bfirst\b", pin_zone):
                pin = "first"
            elif re.search(r"\b(?:finally|lastly|last)\b", pin_zone):
                pin = "last"
            entry["_pin"] = pin
            entry["_either"] = bool(re.search(r"\beither\b", " ".join(gap_words[-5:])))
            stops.append(entry)
    n = len(stops)
    for s in stops:
        pin = s.pop("_pin")
        s.pop("_either")
        s["fixed_position"] = 0 if pin == "first" else (n - 1 if pin == "last" and n > 1 else None)
    return stops


def _constraint(kind, attr, thr):
    return {"kind": kind, "attribute": ATTR_WORDS[attr], "threshold": _num(thr)}


def _edge(groups):
    x1, y1, x2, y2 = (int(g) for g in groups)
    return [[x1, y1], [x2, y2]]


def rule_document(query: str) -> dict:
    """The intent document the rule grammar reads from ``query`` (not validated)."""
    text = " ".join(query.lower().split())
    if not text:
        raise ParseError("empty query")
    hard, specials, globals_ = [], [], []

    for m in CLOSURE_RE.finditer(text):
        specials.append({"topic": "road_closure", "mode": "modify",
                         "payload": {"hard_constraints": [{"kind": "forbid_edges", "edges": [_edge(m.groups())]}]}})
        text = _blank(text, m.span())
    for m in FORBID_RE.finditer(text):
        hard.append({"kind": "forbid_edges", "edges": [_edge(m.groups())]})
        text = _blank(text, m.span())
    for regex, kind in ((AVOID_RE, "avoid_attr_above"), (REQUIRE_RE, "require_attr_below")):
        for m in regex.finditer(text):
            hard.append(_constraint(kind, *m.groups()))
            text = _blank(text, m.span())

    for m in BUDGET_RE.finditer(text):
        value = m.group(1) or m.group(2)
        critical = bool(CRITICAL_RE.search(_clause_of(text, m.start())))
        globals_.append({"metric": "total_budget", "threshold": _num(value), "critical": critical})
        text = _blank(text, m.span())
    for regex, metric in ((DIST_RE, "total_dist"), (TIME_RE, "total_time")):
        for m in regex.finditer(text):
            critical = bool(CRITICAL_RE.search(_clause_of(text, m.start())))
            globals_.append({"metric": metric, "threshold": _num(m.group(1)), "critical": critical})
            text = _blank(text, m.span())

    for topic, regex in INFO_TOPICS.items():
        if regex.search(text):
            specials.append({"topic": topic, "mode": "info", "payload": {"query": topic}})

    points = [[int(x), int(y)] for x, y in re.findall(COORD, text)]
    loop = bool(re.search(r"\b(?:loop|round trip|back to (?:the )?start|return to (?:the )?start)\b", text))
    if not points:
        raise ParseError("no (x,y) start coordinate found")
    start = points[0]
    if len(points) >= 2 and not loop:
        end = points[1]
    else:
        end, loop = start, True
    text = re.sub(COORD, " ", text)

    prefs = extract_preferences(text).to_dict()
    return {
        "version": 1,
        "start": start,
        "end": end,
        "loop": loop,
        "poi_stops": _stops(text),
        "hard_constraints": hard,
        "soft_prefs": prefs,
        "specials": specials,
        "globals": globals_,
    }


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

Transport = Callable[[str, dict, dict, float], dict]


def urllib_transport(url: str, headers: dict, body: dict, timeout: float) -> dict:
    req = urllib.request.Request(url, json.dumps(body).encode("utf-8"), headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
        raise TransportError(f"{url}: {exc}") from exc


@dataclass(frozen=True)
class ParserBackend:
    kind: str = "rule"  # rule | remote
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    retry_budget: int = DEFAULT_RETRY_BUDGET
    timeout: float = 60.0
    temperature: float = 0.0
    max_in_flight: int = 4
    transcript_path: str | None = None
    transport: Transport | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("rule", "remote"):
            raise ValueError(f"unknown parser backend {self.kind!r}")
        if self.kind == "remote":
            if self.retry_budget < 1:
                raise ValueError("retry budget must be at least 1")
            if not self.endpoint:
                raise ValueError("remote backend needs an endpoint URL")
            if not self.model:
                raise ValueError("remote backend needs a model name")


RULE = ParserBackend("rule")


@dataclass(frozen=True)
class ParseContext:
    graph: RouteGraph | None = None
    catalog: Sequence[PoiRecord] = ()


@dataclass(frozen=True)
class ParseOutcome:
    intent: ParsedIntent | None
    attempts: int
    schema_valid: bool
    diagnostics: tuple[Violation, ...] = ()

    def __post_init__(self):
        if (self.intent is not None) != self.schema_valid:
            raise ValueError("intent must be present exactly when the output is schema-valid")
        if self.attempts < 1:
            raise ValueError("attempts must be positive")


def parse(query: str, backend: ParserBackend = RULE, context: ParseContext | None = None) -> ParseOutcome:
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    if backend.kind == "rule":
        return _parse_rule(query)
    return _parse_remote(query, backend, context or ParseContext())


def _parse_rule(query):
    try:
        doc = rule_document(query)
    except ParseError as exc:
        return ParseOutcome(None, 1, False, (Violation("", "grammar", str(exc)),))
    try:
        return ParseOutcome(validate(doc), 1, True)
    except IntentValidationError as exc:
        return ParseOutcome(None, 1, False, tuple(exc.violations))


# remote ------------------------------------------------------------------

_SEM_LOCK = threading.Lock()
_SEMAPHORES: dict[tuple, threading.BoundedSemaphore] = {}
_TRANSCRIPT_LOCK = threading.Lock()

FEW_SHOT_QUERIES = (
    "Walk from (3,4) to (40,20). First I want a Mexican restaurant rated at least 4.2, then a quiet coffee shop. "
    "I'd prefer scenic streets.",
    "Plan a loop from (10,10) visiting either a gym with a pool or a park with free entry. "
    "I must avoid tolls and my total budget is $30.",
)


def _semaphore(backend):
    key = (backend.endpoint, backend.max_in_flight)
    with _SEM_LOCK:
        if key not in _SEMAPHORES:
            _SEMAPHORES[key] = threading.BoundedSemaphore(max(1, backend.max_in_flight))
        return _SEMAPHORES[key]


def _context_text(ctx: ParseContext) -> str:
    lines = []
    g = ctx.graph
    if g is not None and g.mode == "grid":
        lines.append(f"The city is a {g.width} x {g.height} grid; points are written (x,y) with "
                     f"0 <= x < {g.width}, 0 <= y < {g.height}.")
    elif g is not None:
        lines.append(f"The city is a free-form road graph with {g.num_nodes} intersections; points are (x,y).")
    lines.append("Every street carries six costs: " + ", ".join(OBJECTIVES) + ". Lower is better for all of them.")
    if ctx.catalog:
        counts = {c: sum(1 for p in ctx.catalog if p.category == c) for c in CATEGORIES}
        lines.append("Available venues: " + ", ".join(f"{n} {c}" for c, n in counts.items()) + ".")
    return "\n".join(lines)


def _poi_spec() -> str:
    lines = []
    for cat, schema in SCHEMAS.items():
        lines.append(f"- {cat}: " + ", ".join(f"{k} ({v})" for k, v in schema.items()))
    lines.append("cuisine values: " + ", ".join(CUISINES))
    lines.append("filter ops: eq, ge, le for numbers; eq for booleans and cuisine; open_at \"HH:MM\" for opening_hours")
    return "\n".join(lines)


def build_prompt(ctx: ParseContext) -> str:
    shots = []
    for q in FEW_SHOT_QUERIES:
        shots.append(f"User: {q}\nJSON: {json.dumps(rule_document(q), sort_keys=True)}")
    return "\n".join([
        "You are a highly precise and structured data extraction agent. Your sole purpose is to convert a "
        "user's travel request into a single, valid JSON object.",
        "<CONTEXT>", _context_text(ctx), "</CONTEXT>",
        "<SCHEMA_AND_RULES>", json.dumps(schema_document(), sort_keys=True),
        "Output one JSON object and nothing else: no markdown, no commentary.", "</SCHEMA_AND_RULES>",
        "<INSTRUCTIONS>",
        "Step 1: Parse route preferences (soft_prefs). For each of " + ", ".join(ATTRIBUTES) + " and dist "
        "decide the user's intensity: 0 if not mentioned or explicitly unimportant, 0.5 for a moderate "
        "preference where compromise is acceptable (\"prefer\", \"would like\"), 1 for a strong requirement "
        "(\"must\", \"really need\"). Reason about the wording before choosing, but output only the number.",
        "Step 2: Parse POI stops (poi_stops). Each stop the user wants to visit is one entry, visited in "
        "addition to the others (AND). When the user offers a choice (\"either A or B\"), emit one entry for "
        "A with B under its alternatives (OR). Use fixed_position only when the user pins the order "
        "(\"first\", \"finally\").",
        "Step 3: Apply POI filters using only the attributes below.",
        "<POI_SPECIFICATION>", _poi_spec(), "</POI_SPECIFICATION>",
        "</INSTRUCTIONS>",
        "<FEW_SHOT_EXAMPLES>", *shots, "</FEW_SHOT_EXAMPLES>",
    ])


def _reply_text(response: dict) -> str:
    try:
        return response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise TransportError("response is not in chat-completions shape") from None


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$")


def _decode(text: str):
    text = _FENCE.sub("", text.strip())
    try:
        return json.loads(text), ()
    except json.JSONDecodeError as exc:
        return None, (Violation("", "json", f"reply is not valid JSON: {exc.msg} at char {exc.pos}"),)


def _repair_message(violations) -> str:
    listing = "\n".join(f"- {v}" for v in violations)
    return ("Your previous output failed validation:\n" + listing +
            "\nReturn the corrected JSON object only.")


def _log_transcript(path, record):
    if not path:
        return
    with _TRANSCRIPT_LOCK, open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _parse_remote(query, backend: ParserBackend, ctx: ParseContext) -> ParseOutcome:
    transport = backend.transport or urllib_transport
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(backend.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    messages: list[dict[str, Any]] = [
        {"role": "system", "content": build_prompt(ctx)},
        {"role": "user", "content": query},
    ]
    violations: tuple = ()
    last_transport_error = None
    for attempt in range(1, backend.retry_budget + 1):
        body = {"model": backend.model, "messages": list(messages), "temperature": backend.temperature}
        try:
            with _semaphore(backend):
                response = transport(backend.endpoint, headers, body, backend.timeout)
            text = _reply_text(response)
        except TransportError as exc:
            log.warning("parse attempt %d: %s", attempt, exc)
            last_transport_error = exc
            _log_transcript(backend.transcript_path, {"attempt": attempt, "query": query, "error": str(exc)})
            continue
        last_transport_error = None
        doc, violations = _decode(text)
        if doc is not None:
            try:
                intent = validate(doc)
            except IntentValidationError as exc:
                violations = tuple(exc.violations)
            else:
                _log_transcript(backend.transcript_path,
                                {"attempt": attempt, "query": query, "reply": text, "violations": []})
                return ParseOutcome(intent, attempt, True)
        _log_transcript(backend.transcript_path, {"attempt": attempt, "query": query, "reply": text,
                                                  "violations": [str(v) for v in violations]})
        messages += [{"role": "assistant", "content": text}, {"role": "user", "content": _repair_message(violations)}]
    if last_transport_error is not None and not violations:
        raise TransportError(f"gave up after {backend.retry_budget} attempts: {last_transport_error}")
    return ParseOutcome(None, backend.retry_budget, False, tuple(violations))
