"""Domain types shared by every part of the simulator.

Simulated time is an integer count of seconds since scenario start. All
values here are frozen dataclasses so they can be shared freely between
runs and threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NewType

SimTime = NewType("SimTime", int)
NodeId = NewType("NodeId", int)
GatewayId = NewType("GatewayId", int)
DroneId = NewType("DroneId", int)

DAY_S = 86_400
HOUR_S = 3_600


class Connectivity(str, Enum):
    REACHABLE = "gateway-reachable"
    DISCONNECTED = "disconnected"


class GatewayKind(str, Enum):
    LORA = "LoRa"
    LORAWAN = "LoRaWAN"


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def distance_to(self, other: Position) -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def ground_distance_to(self, other: Position) -> float:
        return math.dist((self.x, self.y), (other.x, other.y))


@dataclass(frozen=True)
class Reading:
    """One telemetry sample as produced by a sensor node."""

    node: int
    seq: int
    sampled_at: int
    temperature_c: float
    humidity_pct: float
    vwc_6in: float
    vwc_12in: float
    nitrate_mg_l: float
    battery_pct: float
    firmware: int = 1

    def is_finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (
                self.temperature_c,
                self.humidity_pct,
                self.vwc_6in,
                self.vwc_12in,
                self.nitrate_mg_l,
                self.battery_pct,
            )
        )


@dataclass(frozen=True)
class Segment:
    """A wall or building footprint edge that blocks line of sight."""

    a: tuple[float, float]
    b: tuple[float, float]


@dataclass(frozen=True)
class NodeSite:
    id: int
    position: Position
    connectivity: Connectivity = Connectivity.REACHABLE
    label: str = ""


@dataclass(frozen=True)
class GatewaySite:
    id: int
    position: Position
    kind: GatewayKind = GatewayKind.LORA
    internet_available: bool = True
    label: str = ""
    edge_filter: bool = False


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSite, ...] = ()
    gateways: tuple[GatewaySite, ...] = ()
    # LinkProfile values; typed loosely to keep core free of radio imports
    links: tuple = ()
    obstructions: tuple[Segment, ...] = field(default_factory=tuple)

    def node(self, node_id: int) -> NodeSite:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"unknown node {node_id}")

    def gateway(self, gw_id: int) -> GatewaySite:
        for g in self.gateways:
            if g.id == gw_id:
                return g
        raise KeyError(f"unknown gateway {gw_id}")

    def links_from(self, endpoint: str) -> list:
        return [link for link in self.links if link.src == endpoint]


def node_ref(node_id: int) -> str:
    return f"node:{node_id}"


def gw_ref(gw_id: int) -> str:
    return f"gw:{gw_id}"


def parse_ref(ref: str) -> tuple[str, int]:
    kind, _, num = ref.partition(":")
    if kind not in ("node", "gw") or not num.lstrip("-").isdigit():
        raise ValueError(f"bad endpoint reference {ref!r}")
    return kind, int(num)


def _orient(p, q, r) -> int:
    val = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    if abs(val) < 1e-12:
        return 0
    return 1 if val > 0 else -1


def _on_segment(p, q, r) -> bool:
    # q collinear with p-r; is it inside the bounding box?
    return (
        min(p[0], r[0]) - 1e-12 <= q[0] <= max(p[0], r[0]) + 1e-12
        and min(p[1], r[1]) - 1e-12 <= q[1] <= max(p[1], r[1]) + 1e-12
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    o1 = _orient(p1, p2, q1)
    o2 = _orient(p1, p2, q2)
    o3 = _orient(q1, q2, p1)
    o4 = _orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p1, q1, p2):
        return True
    if o2 == 0 and _on_segment(p1, q2, p2):
        return True
    if o3 == 0 and _on_segment(q1, p1, q2):
        return True
    if o4 == 0 and _on_segment(q1, p2, q2):
        return True
    return False


def line_of_sight(topology: Topology, a: Position, b: Position) -> bool:
    """True iff the ground projection of a-b crosses no obstruction."""
    if a == b:
        raise ValueError("line_of_sight needs two distinct positions")
    pa, pb = (a.x, a.y), (b.x, b.y)
    return not any(
        segments_intersect(pa, pb, seg.a, seg.b) for seg in topology.obstructions
    )
