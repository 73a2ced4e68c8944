"""Deterministic discrete-event engine.

Events are ordered by ``(at, seq_no)``; ``seq_no`` is a global insertion
counter, so ties run in scheduling order. Every executed event appends one
JSON-ready record to the event log. Radio outcomes are the only stochastic
decisions in the log; :func:`replay_check` feeds them back in and checks
that the same terminal state comes out.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field

from .backend import FERRY, RADIO, Backend, apply_filter
from .core import DAY_S, Connectivity, GatewayKind, Topology, gw_ref, node_ref, parse_ref
from .ferry import (
    DroneState,
    execute_visit,
    flyover_departures,
    plan_flyover,
    summon,
    travel_s,
    unload,
)
from .gateway import (
    PAYLOAD_LEN,
    Frame,
    GatewayState,
    encode_reading,
    flush_uplink,
    lorawan_on_receive,
    on_receive,
)
from .nmad import build_report, report_to_json
from .node import Buffered, NodeState, Refused, Transmit, dispatch_reading, on_sample_timer
from .radio import (
    DeliveryOutcome,
    DutyCycleLedger,
    LinkProfile,
    RadioParams,
    airtime_ms,
    charge_airtime,
    sample_outcome,
)
from .rng import RngStreams
from .scenario import Scenario, Violation, validate_scenario
from .telemetry import Environment, gen_weather

SAMPLE = "SampleTimer"
TRANSMISSION = "Transmission"
FLUSH = "GatewayFlush"
UPLOAD = "Upload"
DEPARTURE = "FerryDeparture"
VISIT = "FerryVisit"
RETURN = "FerryReturn"
SUMMON = "Summon"
REPORT = "ReportTick"
RUN_END = "RunEnd"


class ScenarioInvalid(ValueError):
    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


class ReplayDivergence(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class Event:
    at: int
    seq_no: int
    kind: str
    data: tuple
    cause: int | None = None


def link_key(link: LinkProfile) -> str:
    return f"{link.src}>{link.dst}"


class _LiveDecisions:
    def __init__(self, streams: RngStreams):
        self.streams = streams

    def __call__(self, link: LinkProfile) -> DeliveryOutcome:
        return sample_outcome(link, self.streams.stream("radio", link_key(link)))

    def leftover(self) -> int:
        return 0


class _ReplayDecisions:
    def __init__(self, recorded: dict[str, deque[DeliveryOutcome]]):
        self.recorded = recorded

    def __call__(self, link: LinkProfile) -> DeliveryOutcome:
        q = self.recorded.get(link_key(link))
        if not q:
            raise ReplayDivergence(f"log has no outcome left for link {link_key(link)}")
        return q.popleft()

    def leftover(self) -> int:
        return sum(len(q) for q in self.recorded.values())


@dataclass
class RunResult:
    scenario: Scenario
    backend: Backend
    gateways: dict[int, GatewayState]
    nodes: dict[int, NodeState]
    drone: DroneState | None
    ledger: DutyCycleLedger
    log: list[dict]
    reports: list[str] = field(default_factory=list)
    environment: Environment | None = None

    def state(self) -> dict:
        return {
            "nodes": [self.nodes[k].snapshot() for k in sorted(self.nodes)],
            "gateways": [self.gateways[k].snapshot() for k in sorted(self.gateways)],
            "backend": self.backend.snapshot(),
            "drone": None if self.drone is None else self.drone.snapshot(),
            "ledger": [[k[0], k[1], v] for k, v in sorted(self.ledger.used.items())],
        }

    def digest(self) -> str:
        return state_digest(self.state())

    def to_json(self) -> str:
        return json.dumps({"state": self.state(), "log": self.log}, sort_keys=True, separators=(",", ":"))


def state_digest(state: dict) -> str:
    blob = json.dumps(state, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class _Sim:
    def __init__(self, scenario: Scenario, decide):
        self.s = scenario
        topo: Topology = scenario.topology
        self.topo = topo
        self.decide = decide
        self.streams = RngStreams(scenario.seed)
        self.ledger = DutyCycleLedger(enforce=scenario.enforce_duty_cycle)
        self.backend = Backend(scenario.filters)
        self.latency_s = math.ceil(scenario.uplink_latency_ms / 1000)
        self.log: list[dict] = []
        self.reports: list[str] = []
        self.queue: list[tuple[int, int, Event]] = []
        self.counter = 0

        self.nodes = {}
        self.node_links: dict[int, list[LinkProfile]] = {}
        self.node_params: dict[int, RadioParams] = {}
        for n in topo.nodes:
            opts = scenario.options(n.id)
            self.nodes[n.id] = NodeState(
                n.id, opts.energy, n.connectivity, opts.buffer_capacity
            )
            links = topo.links_from(node_ref(n.id)) if n.connectivity is Connectivity.REACHABLE else []
            self.node_links[n.id] = links
            self.node_params[n.id] = links[0].params if links else RadioParams()

        self.gateways = {}
        self.relay_link: dict[int, LinkProfile] = {}
        for g in topo.gateways:
            check = None
            if g.edge_filter:
                ranges = scenario.filters
                check = lambda r, ranges=ranges: apply_filter(r, ranges).accepted  # noqa: E731
            self.gateways[g.id] = GatewayState(g.id, g.kind, g.internet_available, check)
            if g.kind is GatewayKind.LORA and not g.internet_available:
                self.relay_link[g.id] = topo.links_from(gw_ref(g.id))[0]

        self.drone = DroneState(scenario.ferry.drone, scenario.ferry.base) if scenario.ferry else None
        self.env = None
        if scenario.run_s > 0:
            weather = gen_weather(
                scenario.seed,
                scenario.run_s,
                scenario.weather.rain_rate_per_day,
                scenario.weather,
                stream=self.streams.stream("weather", 0),
            )
            self.env = Environment.build(weather, scenario.soil)

    # -- scheduling ---------------------------------------------------------

    def schedule(self, at: int, kind: str, data: tuple = (), cause: int | None = None) -> None:
        ev = Event(at, self.counter, kind, data, cause)
        self.counter += 1
        heapq.heappush(self.queue, (at, ev.seq_no, ev))

    def record(self, ev: Event, **details) -> None:
        rec = {"at": ev.at, "seq_no": ev.seq_no, "kind": ev.kind, "cause": ev.cause}
        rec.update(details)
        self.log.append(rec)

    def seed_events(self) -> None:
        s = self.s
        if s.run_s <= 0:
            return
        if s.sample_s <= s.run_s:
            for n in self.topo.nodes:
                self.schedule(0, SAMPLE, (n.id,))
        for g in self.topo.gateways:
            if g.kind is GatewayKind.LORA:
                self.schedule(min(s.flush_s, s.run_s), FLUSH, (g.id,))
        for t in range(s.report_s, s.run_s + 1, s.report_s):
            self.schedule(t, REPORT)
        if s.ferry is not None:
            for t in flyover_departures(s.ferry, s.run_s):
                self.schedule(t, DEPARTURE)
            for i, req in enumerate(s.ferry.summons):
                if req.issued_at <= s.run_s:
                    self.schedule(req.issued_at, SUMMON, (i,))

    def run(self) -> None:
        self.seed_events()
        if not self.queue:
            return
        last = 0
        while self.queue:
            _, _, ev = heapq.heappop(self.queue)
            last = ev.at
            getattr(self, "_on_" + ev.kind)(ev)
        end = Event(last, self.counter, RUN_END, ())
        self.counter += 1
        self.record(end)
        self.log[-1]["digest"] = state_digest(self.result().state())

    def result(self) -> RunResult:
        return RunResult(
            self.s, self.backend, self.gateways, self.nodes, self.drone,
            self.ledger, self.log, self.reports, self.env,
        )

    # -- handlers -----------------------------------------------------------

    def _on_SampleTimer(self, ev: Event) -> None:
        (nid,) = ev.data
        node = self.nodes[nid]
        env, soil = self.env.at(ev.at)
        spec = self.s.options(nid).sensor
        reading = on_sample_timer(node, env, soil, ev.at, spec, self.streams.stream("sensor", nid))
        if reading is None:
            self.record(ev, node=nid, result="dead", battery_mj=node.battery_mj)
            return
        day = ev.at // DAY_S
        action = dispatch_reading(node, reading, self.node_params[nid], self.ledger, day)
        details = {"node": nid, "result": "reading", "seq": reading.seq, "battery_mj": node.battery_mj}
        if isinstance(action, Transmit):
            details.update(
                action="transmit",
                airtime_ms=action.airtime_ms,
                ledger_ms=self.ledger.total(node_ref(nid), day),
            )
            self.record(ev, **details)
            for link in self.node_links[nid]:
                self.schedule(ev.at, TRANSMISSION, (nid, action.frame, link), ev.seq_no)
        elif isinstance(action, Refused):
            details.update(
                action="refused",
                airtime_ms=action.airtime_ms,
                ledger_ms=self.ledger.total(node_ref(nid), day),
            )
            self.record(ev, **details)
        else:
            assert isinstance(action, Buffered)
            details.update(
                action="buffer",
                evicted=None if action.evicted is None else action.evicted.seq,
                buffered=len(node.buffer),
            )
            self.record(ev, **details)
        nxt = ev.at + self.s.sample_s
        if node.alive and nxt + self.s.sample_s <= self.s.run_s:
            self.schedule(nxt, SAMPLE, (nid,), ev.seq_no)

    def _on_Transmission(self, ev: Event) -> None:
        nid, frame, link = ev.data
        outcome = self.decide(link)
        disposition = None
        _, gid = parse_ref(link.dst)
        if outcome is DeliveryOutcome.DELIVERED:
            disposition = on_receive(self.gateways[gid], frame, ev.at)
        elif outcome is DeliveryOutcome.ERROR:
            disposition = on_receive(self.gateways[gid], frame.corrupted(), ev.at)
        self.record(
            ev, node=nid, seq=frame.seq, src=link.src, dst=link.dst, hop=1,
            outcome=outcome.value, disposition=disposition,
        )

    def _on_GatewayFlush(self, ev: Event) -> None:
        (gid,) = ev.data
        gw = self.gateways[gid]
        relayed: list[list] = []
        link = self.relay_link.get(gid)
        day = ev.at // DAY_S

        def relay(frame: Frame) -> DeliveryOutcome:
            air = airtime_ms(link.params, PAYLOAD_LEN)
            if not charge_airtime(self.ledger, gw_ref(gid), day, air):
                relayed.append([frame.sender, frame.seq, DeliveryOutcome.MISSED.value, None, True])
                return DeliveryOutcome.MISSED
            outcome = self.decide(link)
            relayed.append([frame.sender, frame.seq, outcome.value, None, False])
            return outcome

        result = flush_uplink(gw, ev.at, relay if link is not None else None)
        uploads_by_gw: dict[int, list[Frame]] = {}
        if result.uploads:
            uploads_by_gw[gid] = result.uploads
        if result.relayed:
            _, target = parse_ref(link.dst)
            target_gw = self.gateways[target]
            pending = iter(r for r in relayed if r[2] != DeliveryOutcome.MISSED.value)
            for frame, _outcome in result.relayed:
                entry = next(pending)
                accepted = lorawan_on_receive(target_gw, frame, ev.at)
                entry[3] = target_gw.local_log[-1].disposition
                if accepted:
                    uploads_by_gw.setdefault(target, []).append(frame)
        for up_gw, frames in uploads_by_gw.items():
            self.schedule(ev.at + self.latency_s, UPLOAD, (up_gw, tuple(frames)), ev.seq_no)
        details = {"gw": gid, "uploaded": len(result.uploads), "relayed": relayed}
        if link is not None:
            details["link"] = link_key(link)
            details["ledger_ms"] = self.ledger.total(gw_ref(gid), day)
        self.record(ev, **details)
        if ev.at < self.s.run_s:
            self.schedule(min(ev.at + self.s.flush_s, self.s.run_s), FLUSH, (gid,), ev.seq_no)

    def _on_Upload(self, ev: Event) -> None:
        gid, frames = ev.data
        results = []
        for frame in frames:
            res = self.backend.ingest(frame.payload, ev.at, RADIO)
            results.append([frame.sender, frame.seq, res.status])
        self.record(ev, gw=gid, path=RADIO, frames=results)

    def _on_FerryDeparture(self, ev: Event) -> None:
        drone, plan = self.drone, self.s.ferry
        if drone.busy_until > ev.at:
            self.record(ev, drone=drone.id, deferred_to=drone.busy_until)
            self.schedule(drone.busy_until, DEPARTURE, (), ev.seq_no)
            return
        flight = plan_flyover(self.topo, plan, ev.at)
        drone.busy_until = flight.return_at
        for nid, at in flight.visits:
            self.schedule(at, VISIT, (nid, "flyover"), ev.seq_no)
        self.schedule(flight.return_at, RETURN, (), ev.seq_no)
        self.record(
            ev, drone=drone.id, visits=[list(v) for v in flight.visits], return_at=flight.return_at
        )

    def _on_FerryVisit(self, ev: Event) -> None:
        nid, trip = ev.data
        drone, plan = self.drone, self.s.ferry
        site = self.topo.node(nid)
        drone.position = site.position
        got = execute_visit(drone, plan, self.nodes[nid], site.position, ev.at)
        self.record(ev, drone=drone.id, node=nid, trip=trip, seqs=[r.seq for r in got])
        if trip == "summon":
            back = ev.at + plan.dwell_s + travel_s(site.position.ground_distance_to(plan.base), plan.speed_mps)
            self.schedule(back, RETURN, (), ev.seq_no)

    def _on_FerryReturn(self, ev: Event) -> None:
        drone = self.drone
        delivered = unload(drone, self.s.ferry.base)
        results = []
        for r in delivered:
            res = self.backend.ingest(encode_reading(r), ev.at, FERRY)
            results.append([r.node, r.seq, res.status])
        self.record(ev, drone=drone.id, path=FERRY, frames=results)

    def _on_Summon(self, ev: Event) -> None:
        (i,) = ev.data
        req = self.s.ferry.summons[i]
        plan, drone = self.s.ferry, self.drone
        pos = self.topo.node(req.requester).position
        approach = travel_s(plan.base.ground_distance_to(pos), plan.speed_mps)
        visit_at = summon(req, self.nodes[req.requester], drone, ev.at, approach)
        if visit_at is None:
            self.record(ev, node=req.requester, result="refused", reason="requester is dead")
            return
        drone.busy_until = visit_at + plan.dwell_s + approach
        self.schedule(visit_at, VISIT, (req.requester, "summon"), ev.seq_no)
        self.record(ev, node=req.requester, result="scheduled", visit_at=visit_at)

    def _on_ReportTick(self, ev: Event) -> None:
        report = build_report(self.backend, self.topo.nodes, ev.at, self.s.report_s)
        self.reports.append(report_to_json(report))
        self.record(ev, silent=[n.node for n in report.nodes if n.silent])


def run(scenario: Scenario, _decisions: dict[str, deque] | None = None) -> RunResult:
    """Execute a scenario to completion. Refuses invalid scenarios up front."""
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioInvalid(violations)
    decide = _ReplayDecisions(_decisions) if _decisions is not None else _LiveDecisions(
        RngStreams(scenario.seed)
    )
    sim = _Sim(scenario, decide)
    sim.run()
    if decide.leftover():
        raise ReplayDivergence(f"{decide.leftover()} recorded outcomes were never used")
    return sim.result()


def recorded_decisions(log: list[dict]) -> dict[str, deque]:
    """Radio outcomes from a log, per link, in execution order."""
    out: dict[str, deque] = {}
    for rec in log:
        if rec["kind"] == TRANSMISSION:
            out.setdefault(f"{rec['src']}>{rec['dst']}", deque()).append(
                DeliveryOutcome(rec["outcome"])
            )
        elif rec["kind"] == FLUSH:
            for _node, _seq, outcome, _disp, refused in rec["relayed"]:
                if not refused:
                    out.setdefault(rec["link"], deque()).append(DeliveryOutcome(outcome))
    return out


def replay_check(log: list[dict], scenario: Scenario) -> bool:
    """Re-run ``scenario`` with the log's radio outcomes; True iff it ends identically."""
    if not log:
        return not run(scenario).log
    if log[-1].get("kind") != RUN_END:
        return False
    try:
        result = run(scenario, recorded_decisions(log))
    except (ReplayDivergence, ValueError, KeyError):
        return False
    return result.log[-1]["digest"] == log[-1]["digest"]


def write_trace(log: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in log:
            fh.write(json.dumps(rec, default=_jsonable) + "\n")


def read_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _jsonable(obj):
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")

