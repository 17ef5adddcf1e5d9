import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from intentroute.mapenv import generate_grid_map
from intentroute.poicatalog import (
    CATEGORY_COUNTS,
    CUISINES,
    AttrFilter,
    PoiError,
    PoiRecord,
    TooManyStops,
    filter_pois,
    generate_pois,
    is_open,
    load_catalog,
    order_stops,
    rank,
    save_catalog,
)

from oracles import best_order_length, tour_length


def test_counts_and_distinct_nodes(grid50):
    pois = generate_pois(grid50, seed=1)
    assert Counter(p.category for p in pois) == CATEGORY_COUNTS
    assert len({p.node for p in pois}) == 50
    assert len({p.id for p in pois}) == 50


def test_generation_deterministic(grid50):
    assert generate_pois(grid50, seed=4) == generate_pois(grid50, seed=4)
    assert save_catalog(generate_pois(grid50, seed=4)) == save_catalog(generate_pois(grid50, seed=4))


def test_attribute_bounds(pois50):
    for p in pois50:
        r = p.attrs["rating"]
        assert 0.0 <= r <= 5.0 and round(r, 1) == r
        if p.category == "restaurant":
            assert p.attrs["cuisine"] in CUISINES
            assert 15 <= p.attrs["average_cost"] <= 120
        if p.category == "coffee_shop":
            assert 4 <= p.attrs["average_cost"] <= 15
        if p.category == "gym":
            assert 10 <= p.attrs["average_cost"] <= 60
        if p.category == "park":
            assert "average_cost" not in p.attrs


def test_too_small_graph():
    with pytest.raises(PoiError):
        generate_pois(generate_grid_map(5, 5, seed=0), seed=0)


def test_catalog_roundtrip(grid50, pois50):
    data = save_catalog(pois50, seed=0)
    assert load_catalog(data, grid50) == pois50
    assert save_catalog(load_catalog(data), seed=0) == data


def test_record_schema_enforced():
    attrs = {"has_entry_fee": False, "rating": 4.0, "opening_hours": "06:00-22:00"}
    PoiRecord("P01", "park", 0, "x", attrs)
    with pytest.raises(PoiError, match="exactly"):
        PoiRecord("P02", "park", 0, "x", {**attrs, "average_cost": 3})
    with pytest.raises(PoiError, match="rating"):
        PoiRecord("P03", "park", 0, "x", {**attrs, "rating": 5.5})
    with pytest.raises(PoiError, match="HH:MM"):
        PoiRecord("P04", "park", 0, "x", {**attrs, "opening_hours": "6-22"})


def test_filter_conjunction(pois50):
    flts = [AttrFilter("cuisine", "eq", "Italian"), AttrFilter("rating", "ge", 4.0),
            AttrFilter("is_vegetarian_friendly", "eq", True)]
    got = filter_pois(pois50, "restaurant", flts)
    want = [p for p in pois50 if p.category == "restaurant" and p.attrs["cuisine"] == "Italian"
            and p.attrs["rating"] >= 4.0 and p.attrs["is_vegetarian_friendly"]]
    assert got == want


def test_filter_vacuous_and_out_of_range(pois50):
    assert len(filter_pois(pois50, "gym", [])) == 10
    assert filter_pois(pois50, "restaurant", [AttrFilter("rating", "ge", 6.0)]) == []


@pytest.mark.parametrize("flt", [
    AttrFilter("wifi", "eq", True),
    AttrFilter("rating", "contains", "4"),
    AttrFilter("is_work_friendly", "ge", 1),
    AttrFilter("cuisine", "eq", "Thai"),
])
def test_filter_type_errors(pois50, flt):
    with pytest.raises(PoiError):
        filter_pois(pois50, "restaurant" if flt.field != "is_work_friendly" else "coffee_shop", [flt])


def test_filter_monotone(pois50):
    base = filter_pois(pois50, "restaurant", [AttrFilter("rating", "ge", 3.5)])
    more = filter_pois(pois50, "restaurant", [AttrFilter("rating", "ge", 3.5), AttrFilter("average_cost", "le", 60)])
    assert set(p.id for p in more) <= set(p.id for p in base)


def test_open_at_intervals():
    assert is_open("11:00-22:00", 11 * 60)
    assert not is_open("11:00-22:00", 22 * 60)
    assert is_open("18:00-02:00", 60)      # overnight wrap
    assert not is_open("18:00-02:00", 12 * 60)
    assert is_open("00:00-24:00", 23 * 60 + 59)


def _rest(i, rating, node):
    return PoiRecord(f"R{i:02d}", "restaurant", node, "x", {
        "cuisine": "Italian", "rating": rating, "average_cost": 20,
        "is_vegetarian_friendly": True, "opening_hours": "11:00-22:00"})


def test_rank_rating_then_detour_then_id(grid50):
    a, b = grid50.node_at(0, 0), grid50.node_at(10, 0)
    on_line = _rest(3, 4.5, grid50.node_at(5, 0))       # detour 0
    off_line = _rest(1, 4.5, grid50.node_at(5, 5))      # detour > 0
    low = _rest(2, 3.0, grid50.node_at(5, 0))
    assert [p.id for p in rank([off_line, low, on_line], a, b, grid50)] == ["R03", "R01", "R02"]
    twin = _rest(0, 4.5, grid50.node_at(5, 0))
    assert [p.id for p in rank([on_line, twin], a, b, grid50)] == ["R00", "R03"]
    assert rank([low], a, b, grid50) == [low]
    assert rank([], a, b, grid50) == []


def test_order_stops_no_detour_example():
    s, e, p1, p2 = (0, 0), (10, 0), (3, 0), (7, 0)
    assert order_stops(s, e, [p2, p1]) == [s, p1, p2, e]
    assert tour_length([s, p1, p2, e]) == 10
    assert tour_length([s, p2, p1, e]) == 18  # 7 + 4 + 7


def test_order_stops_fixed_and_empty():
    s, e = (0, 0), (10, 0)
    stops = [(7, 0), (3, 0)]
    assert order_stops(s, e, stops, {0: 0, 1: 1}) == [s, (7, 0), (3, 0), e]
    assert order_stops(s, e, []) == [s, e]


def test_order_stops_budget():
    with pytest.raises(TooManyStops):
        order_stops((0, 0), (1, 1), [(i, i) for i in range(7)])
    # pinned stops do not count against the budget
    assert len(order_stops((0, 0), (1, 1), [(i, i) for i in range(7)], {0: 0})) == 9


@given(st.integers(0, 10_000))
def test_order_stops_matches_oracle(seed):
    rnd = random.Random(seed)
    n = rnd.randint(0, 5)
    pts = [(rnd.randint(0, 49), rnd.randint(0, 29)) for _ in range(n + 2)]
    s, e, stops = pts[0], pts[1], pts[2:]
    fixed = {0: rnd.randrange(n)} if n and rnd.random() < 0.3 else {}
    out = order_stops(s, e, stops, fixed)
    assert len(out) == n + 2
    assert sorted(out[1:-1]) == sorted(stops)
    assert tour_length(out) == pytest.approx(best_order_length(s, e, stops, fixed))
