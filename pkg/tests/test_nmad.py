import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpwansim.backend import Backend
from lpwansim.core import GatewayKind, GatewaySite, NodeSite, Position, Reading, Topology
from lpwansim.gateway import encode_reading
from lpwansim.nmad import (
    StabilityCounters,
    StabilityRatios,
    UndefinedRatio,
    build_report,
    compose_hops,
    expected_messages,
    render_text,
    report_to_json,
    stability,
    stability_by_node,
    stability_rows,
)

HOUR = 3600


def test_expected_messages():
    assert expected_messages(7 * 24 * HOUR, 1800) == 336
    assert expected_messages(1799, 1800) == 0
    with pytest.raises(ValueError):
        expected_messages(10, 0)


def test_counter_invariants():
    with pytest.raises(ValueError):
        StabilityCounters(10, 8, 3)
    with pytest.raises(ValueError):
        StabilityCounters(10, -1, 0)
    assert StabilityCounters(10, 6, 1).missing == 3
    with pytest.raises(UndefinedRatio):
        stability(StabilityCounters(0, 0, 0))


def test_table_counts_invert_to_ratios():
    # 288 expected messages at 179 delivered and 22 corrupted
    r = stability(StabilityCounters(288, 179, 22))
    assert tuple(round(x, 4) for x in r.as_tuple()) == (0.6215, 0.0764, 0.3021)


def test_compose_two_hops():
    e2e = compose_hops(StabilityRatios(0.6215, 0.0764, 0.3021), StabilityRatios(0.8827, 0.0894, 0.0279))
    for got, want in zip(e2e.as_tuple(), (0.5486, 0.0556, 0.3958)):
        assert abs(got - want) < 5e-4


@settings(max_examples=10_000)
@given(st.integers(1, 10**6).flatmap(
    lambda n: st.integers(0, n).flatmap(
        lambda d: st.tuples(st.just(n), st.just(d), st.integers(0, n - d))
    )
))
def test_ratios_sum_to_one(c):
    assert abs(math.fsum(stability(StabilityCounters(*c)).as_tuple()) - 1.0) <= 1e-9


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_composition_is_a_partition(a, b, c, d):
    h1 = StabilityRatios(a * b, a * (1 - b), 1 - a)
    h2 = StabilityRatios(c * d, c * (1 - d), 1 - c)
    e = compose_hops(h1, h2)
    assert e.pdr <= h1.pdr + 1e-12
    assert abs(e.pdr + e.per + e.pmr - 1.0) < 1e-9


TOPO = Topology(
    nodes=(NodeSite(1, Position(0, 0)), NodeSite(2, Position(5, 0))),
    gateways=(
        GatewaySite(1, Position(0, 0), GatewayKind.LORA, internet_available=False),
        GatewaySite(2, Position(0, 0), GatewayKind.LORAWAN),
        GatewaySite(3, Position(0, 0), GatewayKind.LORA),
    ),
)


def test_counters_from_log():
    log = [
        {"kind": "Transmission", "node": 1, "seq": 0, "dst": "gw:1", "outcome": "Delivered"},
        {"kind": "Transmission", "node": 1, "seq": 1, "dst": "gw:1", "outcome": "Error"},
        {"kind": "Transmission", "node": 1, "seq": 2, "dst": "gw:1", "outcome": "Delivered"},
        {"kind": "Transmission", "node": 2, "seq": 0, "dst": "gw:3", "outcome": "Error"},
        {"kind": "Transmission", "node": 2, "seq": 1, "dst": "gw:3", "outcome": "Delivered"},
        {"kind": "GatewayFlush", "gw": 1, "relayed": [
            [1, 0, "Delivered", "accepted", False],
            [1, 2, "Error", "corrupted", False],
        ]},
        {"kind": "Upload", "frames": [[1, 0, "accepted"], [2, 1, "accepted"]]},
    ]
    c = stability_by_node(log, TOPO, 4 * 1800, 1800)
    assert c[1]["hop1"] == StabilityCounters(4, 2, 1)
    assert c[1]["hop2"] == StabilityCounters(2, 1, 1)
    assert c[1]["end_to_end"] == StabilityCounters(4, 1, 1)
    assert c[2]["hop2"] is None
    # an error at an online gateway is terminal
    assert c[2]["end_to_end"] == StabilityCounters(4, 1, 1)


def reading(node, seq, t, **kw):
    base = dict(temperature_c=20.0, humidity_pct=50.0, vwc_6in=0.2, vwc_12in=0.3,
                nitrate_mg_l=10.0, battery_pct=90.0)
    base.update(kw)
    return Reading(node, seq, t, **base)


def test_silent_flag_boundary():
    t = 10 * 24 * HOUR
    b = Backend()
    b.ingest(encode_reading(reading(1, 0, t - 25 * HOUR)), t - 25 * HOUR)
    b.ingest(encode_reading(reading(2, 0, t - 23 * HOUR)), t - 23 * HOUR)
    rep = build_report(b, TOPO.nodes, t)
    flags = {n.node: n.silent for n in rep.nodes}
    assert flags == {1: True, 2: False}
    assert rep.nodes[0].metrics["temperature_c"] is None
    assert rep.nodes[1].metrics["temperature_c"] == (20.0, 0.0)
    assert "!!" in render_text(rep).splitlines()[2]


def test_exactly_24h_is_not_silent():
    t = 5 * 24 * HOUR
    b = Backend()
    b.ingest(encode_reading(reading(1, 0, t - 24 * HOUR)), t - 24 * HOUR)
    assert not build_report(b, TOPO.nodes[:1], t).nodes[0].silent


def test_empty_store_all_silent():
    rep = build_report(Backend(), TOPO.nodes, 24 * HOUR)
    assert all(n.silent and n.last_seen is None for n in rep.nodes)


def test_report_counts_and_json_shape():
    t = 2 * 24 * HOUR
    b = Backend()
    for i, temp in enumerate([18.0, 22.0]):
        b.ingest(encode_reading(reading(1, i, t - HOUR, temperature_c=temp)), t - HOUR)
    b.ingest(encode_reading(reading(1, 9, t - HOUR, humidity_pct=150.0)), t - HOUR)
    rows = stability_rows({1: {"hop1": StabilityCounters(4, 2, 1)}})
    rep = build_report(b, TOPO.nodes[:1], t, stability_rows=rows)
    n = rep.nodes[0]
    assert n.messages_in_day == 3 and n.range_violations == 1
    assert n.metrics["temperature_c"] == (20.0, 2.0)
    doc = json.loads(report_to_json(rep))
    assert list(doc) == ["generated_at", "window_s", "nodes", "stability"]
    assert list(doc["nodes"][0]) == [
        "id", "location", "last_seen", "messages_in_day", "silent", "metrics", "range_violations",
    ]
    assert doc["stability"][0] == {"node": 1, "expected": 4, "normal": 2, "error": 1,
                                   "pdr": 0.5, "per": 0.25, "pmr": 0.25}
    assert report_to_json(rep) == report_to_json(build_report(b, TOPO.nodes[:1], t, stability_rows=rows))


def test_report_before_first_window():
    with pytest.raises(ValueError):
        build_report(Backend(), TOPO.nodes, 100)
