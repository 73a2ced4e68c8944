"""Network monitoring and anomaly detection.

Stability ratios partition the expected message count of a node into
delivered, corrupted and missing messages. Reports summarise each node's
last day of accepted readings and flag nodes that have gone silent.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field

from .backend import Backend
from .core import DAY_S, GatewayKind, NodeSite, Topology, parse_ref

SILENT_AFTER_S = DAY_S
METRICS = ("temperature_c", "humidity_pct", "vwc_6in", "vwc_12in", "nitrate_mg_l", "battery_pct")
SCOPES = ("hop1", "hop2", "end_to_end")


class UndefinedRatio(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class StabilityCounters:
    expected: int
    normal: int
    error: int

    def __post_init__(self):
        if min(self.expected, self.normal, self.error) < 0:
            raise ValueError("stability counters must be non-negative")
        if self.normal + self.error > self.expected:
            raise ValueError(
                f"normal {self.normal} + error {self.error} exceeds expected {self.expected}"
            )

    @property
    def missing(self) -> int:
        return self.expected - self.normal - self.error


@dataclass(frozen=True)
class StabilityRatios:
    pdr: float
    per: float
    pmr: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.pdr, self.per, self.pmr)


def expected_messages(duration_s: int, interval_s: int) -> int:
    if interval_s <= 0:
        raise ValueError("interval must be positive")
    if duration_s < 0:
        raise ValueError("duration must be non-negative")
    return duration_s // interval_s


def stability(c: StabilityCounters) -> StabilityRatios:
    if c.expected == 0:
        raise UndefinedRatio("no messages were expected")
    return StabilityRatios(c.normal / c.expected, c.error / c.expected, c.missing / c.expected)


def compose_hops(hop1: StabilityRatios, hop2: StabilityRatios) -> StabilityRatios:
    """End-to-end ratios of two chained hops.

    Hop-2 ratios are conditional on hop-1 delivery; a frame corrupted on
    hop 1 is dropped at the relay and ends up missing end to end.
    """
    pdr = hop1.pdr * hop2.pdr
    per = hop1.pdr * hop2.per
    return StabilityRatios(pdr, per, max(1.0 - pdr - per, 0.0))


@dataclass
class _Tally:
    delivered: set = field(default_factory=set)
    corrupted: set = field(default_factory=set)
    relay_sent: int = 0
    relay_ok: int = 0
    relay_err: int = 0
    uploaded: set = field(default_factory=set)
    terminal_err: set = field(default_factory=set)


def stability_by_node(
    log: list[dict], topology: Topology, duration_s: int, interval_s: int
) -> dict[int, dict[str, StabilityCounters | None]]:
    """Per-node counters for the first hop, the relay hop and end to end.

    ``hop2`` is ``None`` for nodes whose frames were never relayed.
    Ferried readings never appear in radio records and so never count.
    """
    online = {
        g.id
        for g in topology.gateways
        if g.internet_available and g.kind is GatewayKind.LORA
    }
    tallies = {n.id: _Tally() for n in topology.nodes}
    for rec in log:
        kind = rec["kind"]
        if kind == "Transmission":
            t = tallies[rec["node"]]
            if rec["outcome"] == "Delivered":
                t.delivered.add(rec["seq"])
            elif rec["outcome"] == "Error":
                t.corrupted.add(rec["seq"])
                if parse_ref(rec["dst"])[1] in online:
                    t.terminal_err.add(rec["seq"])
        elif kind == "GatewayFlush":
            for node, seq, outcome, _disp, _refused in rec.get("relayed", ()):
                t = tallies[node]
                t.relay_sent += 1
                if outcome == "Delivered":
                    t.relay_ok += 1
                elif outcome == "Error":
                    t.relay_err += 1
                    t.terminal_err.add(seq)
        elif kind == "Upload":
            for node, seq, _status in rec["frames"]:
                tallies[node].uploaded.add(seq)

    expected = expected_messages(duration_s, interval_s)
    out = {}
    for node_id, t in tallies.items():
        hop2 = (
            StabilityCounters(t.relay_sent, t.relay_ok, t.relay_err) if t.relay_sent else None
        )
        out[node_id] = {
            "hop1": StabilityCounters(
                expected, len(t.delivered), len(t.corrupted - t.delivered)
            ),
            "hop2": hop2,
            "end_to_end": StabilityCounters(
                expected, len(t.uploaded), len(t.terminal_err - t.uploaded)
            ),
        }
    return out


@dataclass(frozen=True)
class NodeReport:
    node: int
    location: str
    last_seen: int | None
    messages_in_day: int
    metrics: dict[str, tuple[float, float] | None]
    silent: bool
    range_violations: int


@dataclass(frozen=True)
class Report:
    generated_at: int
    window_s: int
    nodes: list[NodeReport]
    stability: list[dict] = field(default_factory=list)


def build_report(
    store: Backend,
    nodes: list[NodeSite] | tuple[NodeSite, ...],
    t: int,
    window_s: int = DAY_S,
    stability_rows: list[dict] | None = None,
) -> Report:
    if t < window_s:
        raise ValueError(f"report time {t} precedes one full window ({window_s} s)")
    start = t - window_s
    ids = {n.id for n in nodes}
    last_seen: dict[int, int] = {}
    in_window: dict[int, list] = {i: [] for i in ids}
    violations = dict.fromkeys(ids, 0)
    for rec in store.records:
        node = rec.reading.node
        if node not in ids or rec.received_at > t:
            continue
        if rec.received_at > last_seen.get(node, -1):
            last_seen[node] = rec.received_at
        if rec.received_at > start:
            if rec.verdict.accepted:
                in_window[node].append(rec.reading)
            else:
                violations[node] += 1

    reports = []
    for n in sorted(nodes, key=lambda n: n.id):
        rows = in_window[n.id]
        metrics: dict[str, tuple[float, float] | None] = {}
        for name in METRICS:
            if rows:
                values = [getattr(r, name) for r in rows]
                metrics[name] = (statistics.fmean(values), statistics.pstdev(values))
            else:
                metrics[name] = None
        seen = last_seen.get(n.id)
        reports.append(
            NodeReport(
                node=n.id,
                location=n.label,
                last_seen=seen,
                messages_in_day=len(rows) + violations[n.id],
                metrics=metrics,
                silent=seen is None or t - seen > SILENT_AFTER_S,
                range_violations=violations[n.id],
            )
        )
    return Report(t, window_s, reports, list(stability_rows or []))


def stability_rows(counters: dict[int, dict[str, StabilityCounters | None]], scope: str = "hop1") -> list[dict]:
    rows = []
    for node in sorted(counters):
        c = counters[node][scope]
        if c is None:
            continue
        row = {"node": node, "expected": c.expected, "normal": c.normal, "error": c.error}
        if c.expected:
            r = stability(c)
            row.update(pdr=r.pdr, per=r.per, pmr=r.pmr)
        else:
            row.update(pdr=None, per=None, pmr=None)
        rows.append(row)
    return rows


def report_to_json(report: Report) -> str:
    doc = {
        "generated_at": report.generated_at,
        "window_s": report.window_s,
        "nodes": [
            {
                "id": n.node,
                "location": n.location,
                "last_seen": n.last_seen,
                "messages_in_day": n.messages_in_day,
                "silent": n.silent,
                "metrics": {
                    k: (None if v is None else {"mean": v[0], "std": v[1]})
                    for k, v in n.metrics.items()
                },
                "range_violations": n.range_violations,
            }
            for n in report.nodes
        ],
        "stability": report.stability,
    }
    return json.dumps(doc, indent=2) + "\n"


def render_text(report: Report) -> str:
    """Fixed-width table; silent nodes are marked with ``!!``."""
    head = f"{'':2} {'id':>4} {'location':<16} {'last_seen':>10} {'msgs':>5} {'viol':>4}"
    for name in METRICS:
        head += f" {name:>19}"
    lines = [
        f"NMAD report at t={report.generated_at}s, window {report.window_s}s",
        head,
    ]
    for n in report.nodes:
        mark = "!!" if n.silent else "  "
        seen = "never" if n.last_seen is None else str(n.last_seen)
        line = f"{mark} {n.node:>4} {n.location[:16]:<16} {seen:>10} {n.messages_in_day:>5} {n.range_violations:>4}"
        for name in METRICS:
            v = n.metrics[name]
            cell = "-" if v is None else f"{v[0]:.3f}±{v[1]:.3f}"
            line += f" {cell:>19}"
        lines.append(line)
    silent = [str(n.node) for n in report.nodes if n.silent]
    lines.append("silent nodes: " + (", ".join(silent) if silent else "none"))
    return "\n".join(lines) + "\n"
