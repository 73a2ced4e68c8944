"""Drone data ferrying: scheduled flyovers and on-demand summons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import Position, Reading, Topology
from .node import NodeState, offload_to_drone


class FerryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SummonRequest:
    requester: int
    issued_at: int
    dispatch_latency_s: int = 300


@dataclass(frozen=True)
class FerryPlan:
    drone: int
    interval_s: int
    route: tuple[int, ...]
    speed_mps: float = 10.0
    range_m: float = 100.0
    dispatch_latency_s: int = 300
    base: Position = Position(0.0, 0.0, 0.0)
    dwell_s: int = 0
    summons: tuple[SummonRequest, ...] = ()

    def problems(self) -> list[str]:
        out = []
        if not 3600 <= self.interval_s <= 86400:
            out.append(f"flyover interval {self.interval_s} s outside [3600, 86400]")
        if not self.route:
            out.append("ferry route is empty")
        if self.speed_mps <= 0:
            out.append("drone speed must be positive")
        if self.range_m <= 0:
            out.append("ferry range must be positive")
        if self.dispatch_latency_s <= 0:
            out.append("dispatch latency must be positive")
        if self.dwell_s < 0:
            out.append("dwell time must be non-negative")
        return out


@dataclass(frozen=True)
class Flyover:
    departure: int
    visits: tuple[tuple[int, int], ...]  # (node, arrival time)
    return_at: int


def travel_s(distance_m: float, speed_mps: float) -> int:
    # whole seconds, rounding up; tolerance keeps exact quotients exact
    return math.ceil(distance_m / speed_mps - 1e-9)


def plan_flyover(topology: Topology, plan: FerryPlan, t: int) -> Flyover:
    """Visit times along the route for a flyover departing the base at ``t``."""
    known = {n.id: n.position for n in topology.nodes}
    missing = [n for n in plan.route if n not in known]
    if missing:
        raise FerryConfigError(f"ferry route references unknown node(s) {missing}")
    here = plan.base
    path = 0.0
    dwell = 0
    visits = []
    for node in plan.route:
        pos = known[node]
        path += here.ground_distance_to(pos)
        visits.append((node, t + travel_s(path, plan.speed_mps) + dwell))
        dwell += plan.dwell_s
        here = pos
    path += here.ground_distance_to(plan.base)
    return Flyover(t, tuple(visits), t + travel_s(path, plan.speed_mps) + dwell)


def flyover_departures(plan: FerryPlan, run_s: int) -> list[int]:
    """Departure times ``k * interval`` for ``k >= 1`` that fall inside the run."""
    return list(range(plan.interval_s, run_s + 1, plan.interval_s))


@dataclass
class DroneState:
    id: int
    position: Position = Position(0.0, 0.0, 0.0)
    busy_until: int = 0
    cargo: list[Reading] = field(default_factory=list)
    delivered: set[tuple[int, int]] = field(default_factory=set)

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "busy_until": self.busy_until,
            "cargo": [[r.node, r.seq] for r in self.cargo],
            "delivered": sorted(self.delivered),
        }


def execute_visit(
    drone: DroneState, plan: FerryPlan, node: NodeState, node_pos: Position, t: int
) -> list[Reading]:
    """Collect a node's buffer into the drone's cargo.

    A dead node cannot power its short-range radio, so nothing transfers.
    """
    if drone.position.ground_distance_to(node_pos) > plan.range_m:
        raise ValueError(f"drone {drone.id} is out of range of node {node.id}")
    if not node.alive:
        return []
    readings = offload_to_drone(node, t)
    fresh = [r for r in readings if (r.node, r.seq) not in drone.delivered]
    drone.cargo.extend(fresh)
    return fresh


def unload(drone: DroneState, base: Position) -> list[Reading]:
    """Hand the cargo over at base; each (node, seq) is delivered once."""
    out = []
    for r in drone.cargo:
        key = (r.node, r.seq)
        if key not in drone.delivered:
            drone.delivered.add(key)
            out.append(r)
    drone.cargo.clear()
    drone.position = base
    return out


def summon(
    request: SummonRequest, node: NodeState, drone: DroneState, t: int, approach_s: int = 0
) -> int | None:
    """Visit time for a summons, or ``None`` when the requester is dead.

    The visit is queued behind any trip the drone is already flying; after
    that trip it still needs ``approach_s`` to fly out from base.
    """
    if not node.alive:
        return None
    return max(t + request.dispatch_latency_s, drone.busy_until + approach_s)
