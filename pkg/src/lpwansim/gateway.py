"""Frames, the on-air payload codec, and gateway state machines.

A LoRa gateway logs every frame it hears, drops corrupted and duplicate
frames, and queues the rest. On each flush it either uploads the queue
over a reliable internet channel or relays each frame across a second,
lossy LoRaWAN hop. A LoRaWAN gateway applies the same log/dedup rules and
uploads immediately.

Payload layout (little-endian, 43 bytes)::

    node_id u16 | seq u32 | sampled_at u64 | firmware u8 |
    temperature_c f32 | humidity_pct f32 | vwc_6in f32 | vwc_12in f32 |
    nitrate_mg_l f32 | battery_pct f32 | reserved f32
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .core import GatewayKind, Reading
from .radio import MAX_PAYLOAD, DeliveryOutcome

_CODEC = struct.Struct("<HIQB7f")
PAYLOAD_LEN = _CODEC.size

ACCEPTED = "accepted"
CORRUPTED = "corrupted"
DUPLICATE = "duplicate"
FILTERED = "filtered"


class DecodeError(ValueError):
    pass


def encode_reading(r: Reading) -> bytes:
    return _CODEC.pack(
        r.node,
        r.seq,
        r.sampled_at,
        r.firmware,
        r.temperature_c,
        r.humidity_pct,
        r.vwc_6in,
        r.vwc_12in,
        r.nitrate_mg_l,
        r.battery_pct,
        0.0,
    )


def decode_payload(payload: bytes) -> Reading:
    if len(payload) != PAYLOAD_LEN:
        raise DecodeError(f"payload is {len(payload)} bytes, expected {PAYLOAD_LEN}")
    node, seq, ts, fw, temp, hum, v6, v12, no3, batt, _ = _CODEC.unpack(payload)
    reading = Reading(node, seq, ts, temp, hum, v6, v12, no3, batt, fw)
    if not reading.is_finite():
        raise DecodeError("payload carries a non-finite measurement")
    return reading


@dataclass(frozen=True)
class Frame:
    sender: int
    seq: int
    payload: bytes
    crc_ok: bool = True

    def __post_init__(self):
        if not 1 <= len(self.payload) <= MAX_PAYLOAD:
            raise ValueError(f"payload length {len(self.payload)} outside [1, {MAX_PAYLOAD}]")

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @classmethod
    def from_reading(cls, reading: Reading) -> Frame:
        return cls(reading.node, reading.seq, encode_reading(reading))

    def corrupted(self) -> Frame:
        return Frame(self.sender, self.seq, self.payload, crc_ok=False)

    @property
    def key(self) -> tuple[int, int]:
        return (self.sender, self.seq)


@dataclass(frozen=True)
class LogEntry:
    t: int
    frame: Frame
    disposition: str


@dataclass
class HopTally:
    sent: int = 0
    delivered: int = 0
    error: int = 0
    missed: int = 0


@dataclass
class GatewayState:
    id: int
    kind: GatewayKind = GatewayKind.LORA
    internet_available: bool = True
    # edge filter: returns False for readings to drop at the gateway
    edge_check: Callable[[Reading], bool] | None = None
    local_log: list[LogEntry] = field(default_factory=list)
    uplink_queue: deque[Frame] = field(default_factory=deque)
    seen: set[tuple[int, int]] = field(default_factory=set)
    # first-hop receipts per source node: [crc-ok, corrupted]
    rx_counts: dict[int, list[int]] = field(default_factory=dict)
    # second-hop relay outcomes per source node
    relay: dict[int, HopTally] = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "internet_available": self.internet_available,
            "local_log": [
                [e.t, e.frame.sender, e.frame.seq, e.frame.crc_ok, e.frame.payload.hex(), e.disposition]
                for e in self.local_log
            ],
            "uplink_queue": [[f.sender, f.seq] for f in self.uplink_queue],
            "rx_counts": {str(k): v for k, v in sorted(self.rx_counts.items())},
            "relay": {
                str(k): [v.sent, v.delivered, v.error, v.missed]
                for k, v in sorted(self.relay.items())
            },
        }


def _admit(gw: GatewayState, frame: Frame, t: int) -> str:
    counts = gw.rx_counts.setdefault(frame.sender, [0, 0])
    if not frame.crc_ok:
        counts[1] += 1
        disposition = CORRUPTED
    elif frame.key in gw.seen:
        disposition = DUPLICATE
    else:
        counts[0] += 1
        disposition = ACCEPTED
        if gw.edge_check is not None:
            try:
                keep = gw.edge_check(decode_payload(frame.payload))
            except DecodeError:
                keep = False
            if not keep:
                disposition = FILTERED
        gw.seen.add(frame.key)
    gw.local_log.append(LogEntry(t, frame, disposition))
    return disposition


def on_receive(gw: GatewayState, frame: Frame, t: int) -> str:
    """Log a frame heard by a LoRa gateway and queue it if it is usable."""
    disposition = _admit(gw, frame, t)
    if disposition == ACCEPTED:
        gw.uplink_queue.append(frame)
    return disposition


@dataclass
class FlushResult:
    uploads: list[Frame] = field(default_factory=list)
    relayed: list[tuple[Frame, DeliveryOutcome]] = field(default_factory=list)


def flush_uplink(
    gw: GatewayState,
    t: int,
    relay: Callable[[Frame], DeliveryOutcome] | None = None,
) -> FlushResult:
    """Drain the uplink queue.

    Online gateways hand the whole queue to the reliable channel. Offline
    gateways push each frame through ``relay``, which returns the radio
    outcome of the second hop (including any duty-cycle refusal, reported
    as ``MISSED``).
    """
    result = FlushResult()
    if not gw.uplink_queue:
        return result
    if gw.internet_available:
        result.uploads.extend(gw.uplink_queue)
        gw.uplink_queue.clear()
        return result
    if relay is None:
        raise RuntimeError(f"gateway {gw.id} is offline and has no LoRaWAN link")
    while gw.uplink_queue:
        frame = gw.uplink_queue.popleft()
        outcome = relay(frame)
        tally = gw.relay.setdefault(frame.sender, HopTally())
        tally.sent += 1
        if outcome is DeliveryOutcome.DELIVERED:
            tally.delivered += 1
            result.relayed.append((frame, outcome))
        elif outcome is DeliveryOutcome.ERROR:
            tally.error += 1
            result.relayed.append((frame.corrupted(), outcome))
        else:
            tally.missed += 1
    return result


def lorawan_on_receive(gw: GatewayState, frame: Frame, t: int) -> bool:
    """Log a relayed frame; ``True`` means upload it to the backend now."""
    if gw.kind is not GatewayKind.LORAWAN:
        raise ValueError(f"gateway {gw.id} is not a LoRaWAN gateway")
    return _admit(gw, frame, t) == ACCEPTED

