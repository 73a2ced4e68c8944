"""Sensor-node state machine: sampling, dispatch, buffering and battery."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import Connectivity, Reading
from .gateway import Frame
from .radio import DutyCycleLedger, RadioParams, airtime_ms, charge_airtime
from .rng import RngStream
from .telemetry import EnvSample, SensorSpec, SoilState, sample_reading

DEFAULT_BUFFER_CAPACITY = 4096


@dataclass(frozen=True)
class EnergyModel:
    """Battery budget and draws, all in millijoules / milliwatts.

    The defaults are calibrated to put a node sampling every 30 minutes at
    roughly 120 days of life.
    """

    budget_mj: float = 64_800_000.0
    idle_mw: float = 6.0
    sample_mj: float = 200.0
    # ~45 mA at 3.3 V while the PA is on
    tx_mj_per_ms: float = 0.15
    offload_mj_per_reading: float = 0.5

    def problems(self) -> list[str]:
        return [
            f"{name} is negative"
            for name, v in vars(self).items()
            if v < 0
        ]


@dataclass
class NodeState:
    id: int
    energy: EnergyModel = field(default_factory=EnergyModel)
    connectivity: Connectivity = Connectivity.REACHABLE
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    next_seq: int = 0
    battery_mj: float | None = None
    alive: bool = True
    last_debit_t: int = 0
    evicted: int = 0
    buffer: deque[Reading] = field(init=False)

    def __post_init__(self):
        if self.battery_mj is None:
            self.battery_mj = self.energy.budget_mj
        if self.battery_mj <= 0:
            self.battery_mj = 0.0
            self.alive = False
        self.buffer = deque(maxlen=self.buffer_capacity)

    @property
    def battery_pct(self) -> float:
        if self.energy.budget_mj <= 0:
            return 0.0
        return 100.0 * self.battery_mj / self.energy.budget_mj

    def debit(self, mj: float) -> bool:
        """Draw energy; returns ``False`` (and kills the node) if it runs dry."""
        if mj >= self.battery_mj and mj > 0:
            self.battery_mj = 0.0
            self.alive = False
            return False
        self.battery_mj -= mj
        return True

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "next_seq": self.next_seq,
            "battery_mj": self.battery_mj,
            "alive": self.alive,
            "evicted": self.evicted,
            "buffer": [r.seq for r in self.buffer],
        }


@dataclass(frozen=True)
class Transmit:
    frame: Frame
    airtime_ms: float


@dataclass(frozen=True)
class Buffered:
    reading: Reading
    evicted: Reading | None = None


@dataclass(frozen=True)
class Refused:
    """The duty-cycle budget blocked the send; the frame is lost."""

    frame: Frame
    airtime_ms: float


def on_sample_timer(
    state: NodeState,
    env: EnvSample,
    soil: SoilState,
    t: int,
    spec: SensorSpec,
    rng: RngStream,
) -> Reading | None:
    """Take one sample at ``t``. ``None`` means the node is (now) dead."""
    if not state.alive:
        return None
    # mW x s = mJ
    idle = state.energy.idle_mw * (t - state.last_debit_t)
    state.last_debit_t = t
    if not state.debit(idle + state.energy.sample_mj):
        return None
    reading = sample_reading(
        state.id, env, soil, spec, state.next_seq, t, state.battery_pct, rng
    )
    state.next_seq += 1
    return reading


def dispatch_reading(
    state: NodeState,
    reading: Reading,
    params: RadioParams = RadioParams(),
    ledger: DutyCycleLedger | None = None,
    day: int = 0,
) -> Transmit | Buffered | Refused:
    if reading.node != state.id:
        raise ValueError(f"reading from node {reading.node} dispatched by node {state.id}")
    if state.connectivity is Connectivity.DISCONNECTED:
        evicted = state.buffer[0] if len(state.buffer) == state.buffer.maxlen else None
        state.buffer.append(reading)
        if evicted is not None:
            state.evicted += 1
        return Buffered(reading, evicted)
    frame = Frame.from_reading(reading)
    air = airtime_ms(params, frame.payload_len)
    if ledger is not None and not charge_airtime(ledger, f"node:{state.id}", day, air):
        return Refused(frame, air)
    state.debit(air * state.energy.tx_mj_per_ms)
    return Transmit(frame, air)


def offload_to_drone(state: NodeState, t: int) -> list[Reading]:
    """Hand the whole buffer to a drone in FIFO order and clear it."""
    if not state.buffer:
        return []
    readings = list(state.buffer)
    state.buffer.clear()
    state.debit(len(readings) * state.energy.offload_mj_per_reading)
    return readings
