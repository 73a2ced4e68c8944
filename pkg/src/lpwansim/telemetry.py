"""Synthetic weather, soil moisture and sensor models.

The weather generator works on fixed 15-minute buckets. Soil moisture at
two depths follows first-order relaxation toward a per-depth equilibrium,
kicked upward by rain; the deeper layer sees the rain after an
infiltration lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .core import DAY_S, Reading
from .rng import RngStream, RngStreams

BUCKET_S = 900
VWC_MAX = 0.7


class NodeDead(RuntimeError):
    """Raised when a node with an empty battery is asked to sample."""


@dataclass(frozen=True)
class WeatherParams:
    seasonal_mean_c: float = 22.0
    diurnal_amp_c: float = 6.0
    ar_coef: float = 0.95
    ar_sd_c: float = 0.4
    rain_rate_per_day: float = 0.2
    rain_mean_mm: float = 15.0
    humidity_mean_pct: float = 70.0
    humidity_per_c: float = -2.5
    rain_humidity_boost_pct: float = 25.0
    rain_humidity_decay_s: float = 6 * 3600.0


@dataclass(frozen=True)
class WeatherSeries:
    rain_mm: tuple[float, ...]
    air_temp_c: tuple[float, ...]
    humidity_pct: tuple[float, ...]
    # (bucket index, depth in mm) per rain arrival
    rain_events: tuple[tuple[int, float], ...] = ()
    bucket_s: int = BUCKET_S

    def __len__(self) -> int:
        return len(self.rain_mm)

    def bucket(self, t: int) -> int:
        return min(max(t // self.bucket_s, 0), len(self.rain_mm) - 1)


@dataclass(frozen=True)
class SoilParams:
    theta_6in: float = 0.18
    theta_12in: float = 0.26
    k_6in: float = 0.004
    k_12in: float = 0.003
    drain_6in_s: float = 3 * DAY_S
    drain_12in_s: float = 6 * DAY_S
    lag_s: int = 7200


@dataclass(frozen=True)
class SoilState:
    vwc_6in: float
    vwc_12in: float
    # rain still travelling to the 12-inch layer: (seconds left, mm)
    pending: tuple[tuple[float, float], ...] = ()

    @classmethod
    def at_equilibrium(cls, params: SoilParams) -> SoilState:
        return cls(params.theta_6in, params.theta_12in)


@dataclass(frozen=True)
class SensorSpec:
    temp_range_c: tuple[float, float] = (-40.0, 125.0)
    temp_noise_sd: float = 0.2
    humidity_range_pct: tuple[float, float] = (0.0, 100.0)
    humidity_noise_sd: float = 2.0
    nitrate_baseline_mg_l: float = 10.0
    nitrate_noise_sd: float = 0.5
    firmware: int = 1


@dataclass(frozen=True)
class EnvSample:
    air_temp_c: float
    humidity_pct: float


def gen_weather(
    seed: int,
    duration_s: int,
    rain_event_rate: float,
    params: WeatherParams = WeatherParams(),
    stream: RngStream | None = None,
) -> WeatherSeries:
    """Generate a bucketed weather series.

    Temperature is a seasonal mean plus a daily sinusoid plus AR(1) noise.
    Rain arrives as a Poisson process (``rain_event_rate`` events per day)
    with exponentially distributed depth.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if rain_event_rate < 0:
        raise ValueError("rain rate must be non-negative")
    if stream is None:
        stream = RngStreams(seed).stream("weather", 0)
    n = math.ceil(duration_s / BUCKET_S)
    lam = rain_event_rate * BUCKET_S / DAY_S
    rain, temp, hum, events = [], [], [], []
    ar = 0.0
    wet = 0.0
    decay = math.exp(-BUCKET_S / params.rain_humidity_decay_s)
    for b in range(n):
        t = b * BUCKET_S
        ar = params.ar_coef * ar + stream.normal(0.0, params.ar_sd_c)
        # coldest near 04:00, warmest near 16:00
        diurnal = params.diurnal_amp_c * math.sin(2 * math.pi * (t / DAY_S - 10 / 24))
        air = params.seasonal_mean_c + diurnal + ar
        k = stream.poisson(lam) if lam > 0 else 0
        mm = 0.0
        for _ in range(k):
            depth = stream.exponential(params.rain_mean_mm)
            events.append((b, depth))
            mm += depth
        wet = wet * decay + (1.0 if mm > 0 else 0.0)
        h = (
            params.humidity_mean_pct
            + params.humidity_per_c * (air - params.seasonal_mean_c)
            + params.rain_humidity_boost_pct * min(wet, 1.0)
        )
        rain.append(mm)
        temp.append(air)
        hum.append(h)
    return WeatherSeries(tuple(rain), tuple(temp), tuple(hum), tuple(events))


def step_soil(
    state: SoilState, rain_mm: float, dt: float, params: SoilParams = SoilParams()
) -> SoilState:
    """Advance soil moisture by ``dt`` seconds with ``rain_mm`` falling."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pending = [(left - dt, mm) for left, mm in state.pending]
    if rain_mm > 0:
        pending.append((float(params.lag_s), rain_mm))
    arrived = sum(mm for left, mm in pending if left <= 0)
    pending = [(left, mm) for left, mm in pending if left > 0]

    def relax(v, theta, k, drain_s, water, wet):
        loss = min(dt / drain_s, 1.0) * (v - theta)
        # no net drying while water is arriving at this depth
        if wet and loss > 0:
            loss = 0.0
        return min(max(v + k * water - loss, 0.0), VWC_MAX)

    # rain at the surface also halts drying of the lower layer
    return SoilState(
        relax(state.vwc_6in, params.theta_6in, params.k_6in, params.drain_6in_s,
              rain_mm, rain_mm > 0),
        relax(state.vwc_12in, params.theta_12in, params.k_12in, params.drain_12in_s,
              arrived, arrived > 0 or rain_mm > 0),
        tuple(pending),
    )


def soil_trajectory(
    weather: WeatherSeries,
    params: SoilParams = SoilParams(),
    initial: SoilState | None = None,
) -> tuple[SoilState, ...]:
    """Soil state at the start of each bucket, plus the final state."""
    state = initial or SoilState.at_equilibrium(params)
    out = [state]
    for mm in weather.rain_mm:
        state = step_soil(state, mm, weather.bucket_s, params)
        out.append(state)
    return tuple(out)


@dataclass
class Environment:
    """Weather plus precomputed soil trajectory, looked up by time."""

    weather: WeatherSeries
    soil: tuple[SoilState, ...] = field(default=())

    @classmethod
    def build(cls, weather: WeatherSeries, params: SoilParams = SoilParams()) -> Environment:
        return cls(weather, soil_trajectory(weather, params))

    def at(self, t: int) -> tuple[EnvSample, SoilState]:
        b = self.weather.bucket(t)
        env = EnvSample(self.weather.air_temp_c[b], self.weather.humidity_pct[b])
        return env, self.soil[b]


def _clamp(v: float, bounds: tuple[float, float]) -> float:
    return min(max(v, bounds[0]), bounds[1])


def sample_reading(
    node: int,
    env: EnvSample,
    soil: SoilState,
    spec: SensorSpec,
    seq: int,
    t: int,
    battery_pct: float,
    rng: RngStream,
) -> Reading:
    if battery_pct <= 0:
        raise NodeDead(f"node {node} has no battery left")
    temp = _clamp(env.air_temp_c + rng.normal(0.0, spec.temp_noise_sd), spec.temp_range_c)
    hum = _clamp(
        env.humidity_pct + rng.normal(0.0, spec.humidity_noise_sd), spec.humidity_range_pct
    )
    nitrate = max(spec.nitrate_baseline_mg_l + rng.normal(0.0, spec.nitrate_noise_sd), 0.0)
    return Reading(
        node=node,
        seq=seq,
        sampled_at=t,
        temperature_c=temp,
        humidity_pct=hum,
        vwc_6in=soil.vwc_6in,
        vwc_12in=soil.vwc_12in,
        nitrate_mg_l=nitrate,
        battery_pct=battery_pct,
        firmware=spec.firmware,
    )


def with_overrides(spec: SensorSpec, overrides: dict) -> SensorSpec:
    return replace(spec, **overrides) if overrides else spec
