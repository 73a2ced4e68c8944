import copy
import dataclasses
import hashlib

import pytest

from lpwansim.engine import (
    RUN_END,
    ScenarioInvalid,
    read_trace,
    recorded_decisions,
    replay_check,
    run,
    write_trace,
)

from conftest import build, ferry_doc, one_node_doc


def sha(result):
    return hashlib.sha256(result.to_json().encode()).hexdigest()


def test_runs_are_byte_identical(two_hop):
    assert sha(run(two_hop)) == sha(run(two_hop))


def test_perfect_link_week_yields_336_readings():
    r = run(build(one_node_doc()))
    assert r.backend.counts["accepted"] == 336
    assert [x.seq for x in r.backend.query(1, 0, 10**9)] == list(range(336))


def test_zero_duration_is_empty():
    r = run(build(one_node_doc(durations={"run_s": 0})))
    assert r.log == [] and r.backend.records == []


def test_invalid_scenario_refused():
    doc = one_node_doc()
    doc["links"][0]["sf"] = 13
    with pytest.raises(ScenarioInvalid) as err:
        run(build(doc))
    assert err.value.violations[0].rule == "sf-range"


def test_log_is_ordered_and_causal(two_hop):
    log = run(two_hop).log
    keys = [(r["at"], r["seq_no"]) for r in log]
    assert keys == sorted(keys)
    pos = {r["seq_no"]: i for i, r in enumerate(log)}
    for i, r in enumerate(log):
        if r["cause"] is not None:
            assert pos[r["cause"]] < i
            assert log[pos[r["cause"]]]["at"] <= r["at"]
    assert log[-1]["kind"] == RUN_END
    assert sum(r["kind"] == RUN_END for r in log) == 1


def test_simultaneous_events_keep_insertion_order():
    doc = one_node_doc()
    doc["nodes"] = [{"id": i, "position": [100 + i, 0]} for i in (5, 3, 4)]
    doc["links"] = [{"from": f"node:{i}", "to": "gw:1", "probs": [1, 0, 0]} for i in (5, 3, 4)]
    first = [r["node"] for r in run(build(doc)).log if r["kind"] == "SampleTimer" and r["at"] == 0]
    assert first == [5, 3, 4]


def test_replay_accepts_own_log(two_hop):
    assert replay_check(run(two_hop).log, two_hop)


def test_replay_rejects_flipped_outcome(two_hop):
    log = copy.deepcopy(run(two_hop).log)
    for rec in log:
        if rec["kind"] == "Transmission" and rec["outcome"] == "Delivered":
            rec["outcome"] = "Missed"
            break
    assert not replay_check(log, two_hop)


def test_replay_rejects_other_seed(two_hop):
    other = run(dataclasses.replace(two_hop, seed=two_hop.seed + 1))
    assert other.log[-1]["digest"] != run(two_hop).log[-1]["digest"]
    assert not replay_check(other.log, two_hop)


def test_replay_rejects_truncated_log(two_hop):
    assert not replay_check(run(two_hop).log[:-1], two_hop)


def test_trace_round_trip(tmp_path, two_hop):
    r = run(two_hop)
    write_trace(r.log, tmp_path / "trace.ndjson")
    back = read_trace(tmp_path / "trace.ndjson")
    assert back == r.log
    assert replay_check(back, two_hop)
    first = (tmp_path / "trace.ndjson").read_text().splitlines()[0]
    assert first.startswith('{"at": 0, "seq_no": ')


def radio_outcomes(result, key):
    return list(recorded_decisions(result.log)[key])


def test_radio_streams_isolated_from_ferry_and_other_nodes():
    with_ferry = run(build(ferry_doc()))
    doc = ferry_doc()
    doc["nodes"] = doc["nodes"][1:]
    del doc["ferry"]
    alone = run(build(doc))
    key = "node:2>gw:1"
    assert radio_outcomes(with_ferry, key) == radio_outcomes(alone, key)


def test_disconnected_node_never_transmits():
    r = run(build(ferry_doc()))
    assert not any(rec["kind"] == "Transmission" and rec["node"] == 1 for rec in r.log)
    paths = {rec.path for rec in r.backend.records if rec.reading.node == 1}
    assert paths == {"ferry"}


def test_summon_visits_node():
    doc = ferry_doc()
    doc["ferry"]["summons"] = [{"node": 1, "at": 4000}]
    r = run(build(doc))
    (s,) = [x for x in r.log if x["kind"] == "Summon"]
    assert s["result"] == "scheduled" and s["visit_at"] == 4300
    visits = [x for x in r.log if x["kind"] == "FerryVisit" and x["trip"] == "summon"]
    assert visits[0]["at"] == 4300 and visits[0]["seqs"] == [0, 1, 2]


def test_relay_hop_counts_reach_backend(two_hop):
    r = run(two_hop)
    uploaded = {(n, s) for rec in r.log if rec["kind"] == "Upload" for n, s, st in rec["frames"]}
    assert uploaded == {(x.reading.node, x.reading.seq) for x in r.backend.records}
    relayed_ok = sum(
        1 for rec in r.log if rec["kind"] == "GatewayFlush"
        for e in rec["relayed"] if e[2] == "Delivered"
    )
    assert relayed_ok == len(uploaded)


def test_edge_filter_drops_at_gateway():
    doc = one_node_doc(durations={"run_s": 86400})
    doc["gateways"][0]["edge_filter"] = True
    doc["filters"] = {"temperature_c": [-40, 0]}
    r = run(build(doc))
    assert r.backend.records == []
    assert {e.disposition for e in r.gateways[1].local_log} == {"filtered"}
