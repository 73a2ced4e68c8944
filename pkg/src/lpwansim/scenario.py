"""Scenario files: parse, serialize and validate.

A scenario is one JSON document. See ``docs/scenario.md`` for the schema.
Parsing rejects structurally broken documents with :class:`ScenarioError`;
semantic rule breaks (bad spreading factor, missing relay link, ...) are
reported as data by :func:`validate_scenario`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .backend import FilterRanges
from .core import (
    DAY_S,
    Connectivity,
    GatewayKind,
    GatewaySite,
    NodeSite,
    Position,
    Segment,
    Topology,
    line_of_sight,
    parse_ref,
)
from .ferry import FerryPlan, SummonRequest
from .node import DEFAULT_BUFFER_CAPACITY, EnergyModel
from .radio import LinkProfile, RadioParams, check_triple, InvalidProbabilities
from .telemetry import SensorSpec, SoilParams, WeatherParams


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class NodeOptions:
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    energy: EnergyModel = EnergyModel()
    sensor: SensorSpec = SensorSpec()


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    seed: int = 0
    run_s: int = 7 * DAY_S
    sample_s: int = 1800
    flush_s: int = 60
    report_s: int = DAY_S
    filters: FilterRanges = FilterRanges()
    ferry: FerryPlan | None = None
    weather: WeatherParams = WeatherParams()
    soil: SoilParams = SoilParams()
    enforce_duty_cycle: bool = False
    uplink_latency_ms: int = 250
    node_options: tuple[tuple[int, NodeOptions], ...] = ()

    def options(self, node_id: int) -> NodeOptions:
        for nid, opts in self.node_options:
            if nid == node_id:
                return opts
        return NodeOptions()


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message} [{self.rule}]"


# -- parsing ---------------------------------------------------------------


def _position(raw, where: str) -> Position:
    if not isinstance(raw, (list, tuple)) or len(raw) not in (2, 3):
        raise ScenarioError(f"{where}: position must be [x, y] or [x, y, z]")
    return Position(*(float(v) for v in raw))


def _dataclass_from(cls, raw: dict | None, where: str, tuple_fields=()):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ScenarioError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {k: (tuple(v) if k in tuple_fields else v) for k, v in raw.items()}
    return cls(**kwargs)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return doc[key]


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        return _scenario_from_dict(doc)
    except ScenarioError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def _scenario_from_dict(doc: dict) -> Scenario:
    nodes, options = [], []
    for i, raw in enumerate(_require(doc, "nodes", "scenario")):
        where = f"nodes[{i}]"
        nid = int(_require(raw, "id", where))
        nodes.append(
            NodeSite(
                id=nid,
                position=_position(raw.get("position", [0, 0, 0]), where),
                connectivity=Connectivity(raw.get("connectivity", Connectivity.REACHABLE.value)),
                label=str(raw.get("label", "")),
            )
        )
        options.append(
            (
                nid,
                NodeOptions(
                    buffer_capacity=int(raw.get("buffer_capacity", DEFAULT_BUFFER_CAPACITY)),
                    energy=_dataclass_from(EnergyModel, raw.get("energy"), f"{where}.energy"),
                    sensor=_dataclass_from(
                        SensorSpec,
                        raw.get("sensor"),
                        f"{where}.sensor",
                        tuple_fields=("temp_range_c", "humidity_range_pct"),
                    ),
                ),
            )
        )

    gateways = []
    for i, raw in enumerate(_require(doc, "gateways", "scenario")):
        where = f"gateways[{i}]"
        gateways.append(
            GatewaySite(
                id=int(_require(raw, "id", where)),
                position=_position(raw.get("position", [0, 0, 0]), where),
                kind=GatewayKind(raw.get("kind", GatewayKind.LORA.value)),
                internet_available=bool(raw.get("internet_available", True)),
                label=str(raw.get("label", "")),
                edge_filter=bool(raw.get("edge_filter", False)),
            )
        )

    obstructions = tuple(
        Segment(tuple(map(float, a)), tuple(map(float, b)))
        for a, b in doc.get("obstructions", [])
    )
    positions = {f"node:{n.id}": n.position for n in nodes}
    positions.update({f"gw:{g.id}": g.position for g in gateways})
    partial = Topology(tuple(nodes), tuple(gateways), (), obstructions)

    links = []
    for i, raw in enumerate(_require(doc, "links", "scenario")):
        where = f"links[{i}]"
        src, dst = str(_require(raw, "from", where)), str(_require(raw, "to", where))
        for ref in (src, dst):
            try:
                parse_ref(ref)
            except ValueError as exc:
                raise ScenarioError(f"{where}: {exc}") from None
        if "distance_m" in raw:
            distance = float(raw["distance_m"])
        elif src in positions and dst in positions:
            distance = positions[src].distance_to(positions[dst])
        else:
            raise ScenarioError(f"{where}: no distance_m and an endpoint is unknown")
        if "los" in raw:
            los = bool(raw["los"])
        elif src in positions and dst in positions and positions[src] != positions[dst]:
            los = line_of_sight(partial, positions[src], positions[dst])
        else:
            los = True
        probs = raw.get("probs")
        if probs is not None and raw.get("derived"):
            raise ScenarioError(f"{where}: give either probs or derived, not both")
        links.append(
            LinkProfile(
                src=src,
                dst=dst,
                distance_m=distance,
                los=los,
                params=RadioParams(
                    sf=int(raw.get("sf", 7)),
                    bw_hz=int(raw.get("bw_hz", 125_000)),
                    cr=int(raw.get("cr", 1)),
                    preamble_symbols=int(raw.get("preamble_symbols", 8)),
                    explicit_header=bool(raw.get("explicit_header", True)),
                    crc_on=bool(raw.get("crc_on", True)),
                ),
                probs=None if probs is None else tuple(float(p) for p in probs),
            )
        )

    durations = doc.get("durations", {})
    intervals = doc.get("intervals", {})
    filters_raw = doc.get("filters") or {}
    filters = FilterRanges(
        **{k: tuple(float(x) for x in v) for k, v in filters_raw.items() if k != "nitrate_max"}
    )
    if "nitrate_max" in filters_raw:
        filters = FilterRanges(
            **{**asdict(filters), "nitrate_mg_l": (filters.nitrate_mg_l[0], float(filters_raw["nitrate_max"]))}
        )

    ferry = None
    ferry_raw = doc.get("ferry")
    if ferry_raw:
        latency = int(ferry_raw.get("dispatch_latency_s", 300))
        ferry = FerryPlan(
            drone=int(ferry_raw.get("drone", 0)),
            interval_s=int(_require(ferry_raw, "interval_s", "ferry")),
            route=tuple(int(n) for n in _require(ferry_raw, "route", "ferry")),
            speed_mps=float(ferry_raw.get("speed_mps", 10.0)),
            range_m=float(ferry_raw.get("range_m", 100.0)),
            dispatch_latency_s=latency,
            base=_position(ferry_raw.get("base", [0, 0, 0]), "ferry.base"),
            dwell_s=int(ferry_raw.get("dwell_s", 0)),
            summons=tuple(
                SummonRequest(int(s["node"]), int(s["at"]), int(s.get("dispatch_latency_s", latency)))
                for s in ferry_raw.get("summons", [])
            ),
        )

    weather_raw = dict(doc.get("weather") or {})
    soil = _dataclass_from(SoilParams, weather_raw.pop("soil", None), "weather.soil")
    weather = _dataclass_from(WeatherParams, weather_raw, "weather")
    radio = doc.get("radio") or {}

    return Scenario(
        topology=Topology(tuple(nodes), tuple(gateways), tuple(links), obstructions),
        seed=int(doc.get("seed", 0)),
        run_s=int(durations.get("run_s", 7 * DAY_S)),
        sample_s=int(intervals.get("sample_s", 1800)),
        flush_s=int(intervals.get("flush_s", 60)),
        report_s=int(intervals.get("report_s", DAY_S)),
        filters=filters,
        ferry=ferry,
        weather=weather,
        soil=soil,
        enforce_duty_cycle=bool(radio.get("enforce_duty_cycle", False)),
        uplink_latency_ms=int(radio.get("uplink_latency_ms", 250)),
        node_options=tuple(options),
    )


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# -- serialization -----------------------------------------------------------


def _pos(p: Position) -> list[float]:
    return [p.x, p.y, p.z]


def scenario_to_dict(s: Scenario) -> dict:
    topo = s.topology
    nodes = []
    for n in topo.nodes:
        opts = s.options(n.id)
        nodes.append(
            {
                "id": n.id,
                "label": n.label,
                "position": _pos(n.position),
                "connectivity": n.connectivity.value,
                "buffer_capacity": opts.buffer_capacity,
                "energy": asdict(opts.energy),
                "sensor": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(opts.sensor).items()},
            }
        )
    links = []
    for link in topo.links:
        d = {
            "from": link.src,
            "to": link.dst,
            "distance_m": link.distance_m,
            "los": link.los,
            **asdict(link.params),
        }
        if link.probs is None:
            d["derived"] = True
        else:
            d["probs"] = list(link.probs)
        links.append(d)
    ferry = None
    if s.ferry is not None:
        f = s.ferry
        ferry = {
            "drone": f.drone,
            "interval_s": f.interval_s,
            "route": list(f.route),
            "speed_mps": f.speed_mps,
            "range_m": f.range_m,
            "dispatch_latency_s": f.dispatch_latency_s,
            "base": _pos(f.base),
            "dwell_s": f.dwell_s,
            "summons": [
                {"node": r.requester, "at": r.issued_at, "dispatch_latency_s": r.dispatch_latency_s}
                for r in f.summons
            ],
        }
    return {
        "seed": s.seed,
        "durations": {"run_s": s.run_s},
        "intervals": {"sample_s": s.sample_s, "flush_s": s.flush_s, "report_s": s.report_s},
        "nodes": nodes,
        "gateways": [
            {
                "id": g.id,
                "label": g.label,
                "position": _pos(g.position),
                "kind": g.kind.value,
                "internet_available": g.internet_available,
                "edge_filter": g.edge_filter,
            }
            for g in topo.gateways
        ],
        "links": links,
        "obstructions": [[list(o.a), list(o.b)] for o in topo.obstructions],
        "filters": {k: list(v) for k, v in asdict(s.filters).items()},
        "ferry": ferry,
        "weather": {**asdict(s.weather), "soil": asdict(s.soil)},
        "radio": {"enforce_duty_cycle": s.enforce_duty_cycle, "uplink_latency_ms": s.uplink_latency_ms},
    }


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


# -- validation --------------------------------------------------------------


def validate_scenario(s: Scenario) -> list[Violation]:
    out: list[Violation] = []

    def bad(entity, rule, message):
        out.append(Violation(entity, rule, message))

    topo = s.topology
    for label, ids in (
        ("node", [n.id for n in topo.nodes]),
        ("gateway", [g.id for g in topo.gateways]),
    ):
        for i in sorted({i for i in ids if ids.count(i) > 1}):
            bad(f"{label} {i}", "unique-id", f"{label} id {i} is used more than once")
        for i in ids:
            if not 0 <= i <= 0xFFFF:
                bad(f"{label} {i}", "id-range", "ids must fit in [0, 65535]")

    if s.run_s < 0:
        bad("durations", "duration-range", "run_s must be non-negative")
    for name in ("sample_s", "flush_s", "report_s"):
        if getattr(s, name) <= 0:
            bad("intervals", "interval-positive", f"{name} must be positive")
    if s.uplink_latency_ms < 0:
        bad("radio", "latency-range", "uplink latency must be non-negative")
    for msg in s.filters.problems():
        bad("filters", "filter-range", msg)

    nodes = {n.id: n for n in topo.nodes}
    gws = {g.id: g for g in topo.gateways}
    for n in topo.nodes:
        if n.position.z < 0:
            bad(f"node {n.id}", "height", "height above ground must be >= 0")
    for g in topo.gateways:
        if g.position.z < 0:
            bad(f"gateway {g.id}", "height", "height above ground must be >= 0")
        if g.kind is GatewayKind.LORAWAN and not g.internet_available:
            bad(f"gateway {g.id}", "lorawan-online", "LoRaWAN gateways must have internet")
    for nid, opts in s.node_options:
        if opts.buffer_capacity < 1:
            bad(f"node {nid}", "buffer-capacity", "buffer capacity must be >= 1")
        for msg in opts.energy.problems():
            bad(f"node {nid}", "energy-range", msg)
        if opts.sensor.temp_noise_sd < 0 or opts.sensor.humidity_noise_sd < 0 or opts.sensor.nitrate_noise_sd < 0:
            bad(f"node {nid}", "noise-range", "sensor noise must be non-negative")

    hop1_targets: dict[int, list[int]] = {}
    relay_targets: dict[int, list[int]] = {}
    seen_pairs = set()
    for link in topo.links:
        name = f"link {link.src}->{link.dst}"
        if (link.src, link.dst) in seen_pairs:
            bad(name, "unique-link", "duplicate link between the same endpoints")
        seen_pairs.add((link.src, link.dst))
        for msg in link.params.problems():
            rule = "sf-range" if "spreading" in msg else "bw-range" if "bandwidth" in msg else "radio-params"
            bad(name, rule, msg)
        if not link.distance_m > 0:
            bad(name, "distance-positive", "distance_m must be positive")
        if link.probs is not None:
            try:
                check_triple(link.probs)
            except InvalidProbabilities as exc:
                bad(name, "probabilities", str(exc))
        skind, sid = parse_ref(link.src)
        dkind, did = parse_ref(link.dst)
        if skind == "node":
            if sid not in nodes:
                bad(name, "unknown-endpoint", f"unknown node {sid}")
            elif dkind != "gw" or did not in gws or gws[did].kind is not GatewayKind.LORA:
                bad(name, "link-shape", "node links must end at a LoRa gateway")
            else:
                hop1_targets.setdefault(sid, []).append(did)
        else:
            if sid not in gws:
                bad(name, "unknown-endpoint", f"unknown gateway {sid}")
            elif (
                gws[sid].kind is not GatewayKind.LORA
                or dkind != "gw"
                or did not in gws
                or gws[did].kind is not GatewayKind.LORAWAN
            ):
                bad(name, "link-shape", "gateway links must run from a LoRa to a LoRaWAN gateway")
            else:
                relay_targets.setdefault(sid, []).append(did)

    for n in topo.nodes:
        if n.connectivity is Connectivity.REACHABLE and not hop1_targets.get(n.id):
            bad(f"node {n.id}", "reachable-link", "gateway-reachable node has no link to a LoRa gateway")
    for g in topo.gateways:
        if g.kind is GatewayKind.LORA and not g.internet_available:
            targets = relay_targets.get(g.id, [])
            if not targets:
                bad(f"gateway {g.id}", "relay-link", "offline LoRa gateway has no LoRaWAN link")
            elif len(targets) > 1:
                bad(f"gateway {g.id}", "relay-link", "offline LoRa gateway has more than one LoRaWAN link")

    if s.ferry is not None:
        for msg in s.ferry.problems():
            bad(f"drone {s.ferry.drone}", "ferry-plan", msg)
        for nid in s.ferry.route:
            if nid not in nodes:
                bad(f"drone {s.ferry.drone}", "ferry-route", f"route visits unknown node {nid}")
        for req in s.ferry.summons:
            if req.requester not in nodes:
                bad(f"drone {s.ferry.drone}", "ferry-summon", f"summons from unknown node {req.requester}")
            if req.dispatch_latency_s <= 0 or req.issued_at < 0:
                bad(f"drone {s.ferry.drone}", "ferry-summon", "summons needs issued_at >= 0 and latency > 0")
    return out
