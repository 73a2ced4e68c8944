"""LoRa link model: airtime, attenuation, duty-cycle budget and outcomes.

Delivery is modelled as a three-way categorical draw per frame
(delivered, corrupted, missed). Links either carry a measured probability
triple or derive one from distance and line of sight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

MAX_PAYLOAD = 242
DAILY_AIRTIME_BUDGET_MS = 30_000.0
SPREADING_FACTORS = range(7, 13)
BANDWIDTHS_HZ = (125_000, 250_000)

# derived-mode calibration: logistic in log10(relative power), SF7/125 kHz
_LOGISTIC_SLOPE = 3.4935
_LOGISTIC_MID = -6.7135
_MISS_LOGIT = -6.9  # p ~ 0.001
_FULL_LOGIT = 6.9  # p ~ 0.999
SF_GAIN_LOG10 = 0.25
BW250_PENALTY_LOG10 = 0.3
OBSTRUCTION_PENALTY = 0.5
ERROR_SHARE = 0.1
ERROR_CAP = 0.1


class PayloadTooLong(ValueError):
    pass


class InvalidProbabilities(ValueError):
    pass


class DeliveryOutcome(str, Enum):
    DELIVERED = "Delivered"
    ERROR = "Error"
    MISSED = "Missed"


@dataclass(frozen=True)
class RadioParams:
    sf: int = 7
    bw_hz: int = 125_000
    cr: int = 1
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True

    def problems(self) -> list[str]:
        out = []
        if self.sf not in SPREADING_FACTORS:
            out.append(f"spreading factor {self.sf} outside [7, 12]")
        if self.bw_hz not in BANDWIDTHS_HZ:
            out.append(f"bandwidth {self.bw_hz} Hz not in {{125000, 250000}}")
        if not 1 <= self.cr <= 4:
            out.append(f"coding rate offset {self.cr} outside [1, 4]")
        if self.preamble_symbols < 0:
            out.append("negative preamble length")
        return out

    @property
    def low_data_rate(self) -> bool:
        return self.sf >= 11 and self.bw_hz == 125_000


@dataclass(frozen=True)
class LinkProfile:
    """A directed radio link between two endpoint references.

    ``probs`` is ``None`` for derived mode.
    """

    src: str
    dst: str
    distance_m: float
    los: bool = True
    params: RadioParams = field(default_factory=RadioParams)
    probs: tuple[float, float, float] | None = None

    @property
    def derived(self) -> bool:
        return self.probs is None


def symbol_time_ms(params: RadioParams) -> float:
    return (2**params.sf) / params.bw_hz * 1000.0


def airtime_ms(params: RadioParams, payload_len: int) -> float:
    """Time on air of one frame, in milliseconds (Semtech modem formula)."""
    if payload_len > MAX_PAYLOAD:
        raise PayloadTooLong(f"payload of {payload_len} bytes exceeds {MAX_PAYLOAD}")
    if payload_len <= 0:
        raise ValueError("payload length must be positive")
    bad = params.problems()
    if bad:
        raise ValueError("; ".join(bad))
    t_sym = symbol_time_ms(params)
    de = 1 if params.low_data_rate else 0
    ih = 0 if params.explicit_header else 1
    crc = 1 if params.crc_on else 0
    num = 8 * payload_len - 4 * params.sf + 28 + 16 * crc - 20 * ih
    n_payload = 8 + max(math.ceil(num / (4 * (params.sf - 2 * de))) * (params.cr + 4), 0)
    return (params.preamble_symbols + 4.25 + n_payload) * t_sym


def rx_power_rel(distance_m: float) -> float:
    """Received power relative to the power at 1 m (inverse-square law)."""
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return 1.0 / (distance_m * distance_m)


def check_triple(probs) -> tuple[float, float, float]:
    if len(probs) != 3:
        raise InvalidProbabilities(f"expected three probabilities, got {len(probs)}")
    d, e, m = (float(p) for p in probs)
    for p in (d, e, m):
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise InvalidProbabilities(f"probability {p} outside [0, 1]")
    if abs(d + e + m - 1.0) > 1e-9:
        raise InvalidProbabilities(f"probabilities sum to {d + e + m}, not 1")
    return d, e, m


def _logistic(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def derived_deliver_prob(distance_m: float, params: RadioParams) -> float:
    """Line-of-sight delivery probability from distance and radio settings."""
    x = math.log10(rx_power_rel(distance_m))
    x += SF_GAIN_LOG10 * (params.sf - 7)
    if params.bw_hz == 250_000:
        x -= BW250_PENALTY_LOG10
    z = _LOGISTIC_SLOPE * (x - _LOGISTIC_MID)
    if z <= _MISS_LOGIT:
        return 0.0
    if z >= _FULL_LOGIT:
        return 1.0
    lo, hi = _logistic(_MISS_LOGIT), _logistic(_FULL_LOGIT)
    return (_logistic(z) - lo) / (hi - lo)


def outcome_probs(link: LinkProfile) -> tuple[float, float, float]:
    if link.probs is not None:
        return check_triple(link.probs)
    p_d = derived_deliver_prob(link.distance_m, link.params)
    if p_d == 0.0:
        return (0.0, 0.0, 1.0)
    if not link.los:
        p_d *= OBSTRUCTION_PENALTY
    rest = 1.0 - p_d
    p_e = min(ERROR_SHARE * rest, ERROR_CAP)
    return (p_d, p_e, 1.0 - p_d - p_e)


def draw_outcome(probs: tuple[float, float, float], u: float) -> DeliveryOutcome:
    """Map a uniform draw in [0, 1) onto the outcome categories."""
    d, e, _ = probs
    if u < d:
        return DeliveryOutcome.DELIVERED
    if u < d + e:
        return DeliveryOutcome.ERROR
    return DeliveryOutcome.MISSED


def sample_outcome(link: LinkProfile, stream) -> DeliveryOutcome:
    return draw_outcome(outcome_probs(link), stream.random())


@dataclass
class DutyCycleLedger:
    """Accumulated airtime per (transmitter, simulated day)."""

    enforce: bool = False
    budget_ms: float = DAILY_AIRTIME_BUDGET_MS
    used: dict[tuple[str, int], float] = field(default_factory=dict)

    def total(self, tx_id: str, day: int) -> float:
        return self.used.get((tx_id, day), 0.0)


def charge_airtime(ledger: DutyCycleLedger, tx_id: str, day: int, airtime: float) -> bool:
    """Charge ``airtime`` ms to the ledger; ``False`` means the budget refused it."""
    if not airtime > 0:
        raise ValueError("airtime must be positive")
    key = (tx_id, day)
    total = ledger.used.get(key, 0.0) + airtime
    if ledger.enforce and total > ledger.budget_ms:
        return False
    ledger.used[key] = total
    return True
