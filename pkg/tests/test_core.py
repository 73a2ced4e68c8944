import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString

from lpwansim.core import (
    Position,
    Reading,
    Segment,
    Topology,
    gw_ref,
    line_of_sight,
    node_ref,
    parse_ref,
    segments_intersect,
)

coord = st.integers(-20, 20).map(float)
point = st.tuples(coord, coord)


def test_distances():
    a, b = Position(0, 0, 0), Position(3, 4, 12)
    assert a.distance_to(b) == 13.0
    assert a.ground_distance_to(b) == 5.0


def test_refs_round_trip():
    assert parse_ref(node_ref(7)) == ("node", 7)
    assert parse_ref(gw_ref(0)) == ("gw", 0)
    for bad in ("node7", "drone:1", "gw:x", ""):
        with pytest.raises(ValueError):
            parse_ref(bad)


def test_reading_finite():
    r = Reading(1, 0, 0, 20.0, 50.0, 0.2, 0.3, 10.0, 99.0)
    assert r.is_finite()
    assert not Reading(1, 0, 0, float("nan"), 50.0, 0.2, 0.3, 10.0, 99.0).is_finite()


@settings(max_examples=400)
@given(point, point, point, point)
def test_segments_intersect_matches_shapely(p1, p2, q1, q2):
    if p1 == p2 or q1 == q2:
        return
    expected = LineString([p1, p2]).intersects(LineString([q1, q2]))
    assert segments_intersect(p1, p2, q1, q2) == expected


@settings(max_examples=200)
@given(point, point, st.lists(st.tuples(point, point), max_size=4))
def test_line_of_sight_matches_shapely(a, b, walls):
    if a == b:
        return
    walls = [w for w in walls if w[0] != w[1]]
    topo = Topology(obstructions=tuple(Segment(*w) for w in walls))
    ray = LineString([a, b])
    expected = not any(ray.intersects(LineString(w)) for w in walls)
    assert line_of_sight(topo, Position(*a), Position(*b)) == expected


def test_line_of_sight_rejects_identical_endpoints():
    with pytest.raises(ValueError):
        line_of_sight(Topology(), Position(1, 1), Position(1, 1))


def test_topology_lookup_errors():
    with pytest.raises(KeyError):
        Topology().node(3)
    with pytest.raises(KeyError):
        Topology().gateway(3)
