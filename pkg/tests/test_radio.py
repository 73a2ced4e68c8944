import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpwansim.radio import (
    DeliveryOutcome,
    DutyCycleLedger,
    InvalidProbabilities,
    LinkProfile,
    PayloadTooLong,
    RadioParams,
    airtime_ms,
    charge_airtime,
    derived_deliver_prob,
    draw_outcome,
    outcome_probs,
    rx_power_rel,
    sample_outcome,
)
from lpwansim.rng import RngStream

# Worked by hand from the modem datasheet formula, 43-byte payload, CR 4/5,
# 8-symbol preamble, explicit header, CRC on:
#   SF7/125k: Tsym 1.024 ms, 8 + ceil(360/28)*5 = 73 payload symbols,
#             (12.25 + 73) * 1.024 = 87.296 ms
#   SF12/125k (low data rate): Tsym 32.768 ms, 8 + ceil(340/40)*5 = 53,
#             (12.25 + 53) * 32.768 = 2138.112 ms
#   SF7/250k: half of SF7/125k = 43.648 ms
HAND_AIRTIME = [
    (RadioParams(sf=7), 87.296),
    (RadioParams(sf=12), 2138.112),
    (RadioParams(sf=7, bw_hz=250_000), 43.648),
]


@pytest.mark.parametrize(("params", "expected"), HAND_AIRTIME)
def test_airtime_matches_hand_computation(params, expected):
    assert airtime_ms(params, 43) == pytest.approx(expected, abs=1e-9)


def test_airtime_limits():
    assert airtime_ms(RadioParams(), 242) > airtime_ms(RadioParams(), 43)
    with pytest.raises(PayloadTooLong):
        airtime_ms(RadioParams(), 243)
    with pytest.raises(ValueError):
        airtime_ms(RadioParams(), 0)
    with pytest.raises(ValueError):
        airtime_ms(RadioParams(sf=13), 43)
    with pytest.raises(ValueError):
        airtime_ms(RadioParams(bw_hz=500_000), 43)


@given(st.integers(7, 11), st.integers(1, 242))
def test_airtime_grows_with_sf(sf, n):
    assert airtime_ms(RadioParams(sf=sf + 1), n) > airtime_ms(RadioParams(sf=sf), n)


def test_inverse_square():
    assert rx_power_rel(1) == 1.0
    assert rx_power_rel(10) / rx_power_rel(20) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        rx_power_rel(0)


def test_explicit_triple_passes_through():
    link = LinkProfile("node:1", "gw:1", 1250.0, probs=(0.6215, 0.0764, 0.3021))
    assert outcome_probs(link) == (0.6215, 0.0764, 0.3021)


@pytest.mark.parametrize("bad", [(0.5, 0.5, 0.1), (1.2, -0.2, 0.0), (0.5, 0.5)])
def test_invalid_triples_rejected(bad):
    with pytest.raises(InvalidProbabilities):
        outcome_probs(LinkProfile("node:1", "gw:1", 10.0, probs=bad))


@given(st.floats(1.0, 50_000.0), st.sampled_from([7, 9, 12]), st.booleans())
def test_derived_triple_is_a_distribution(d, sf, los):
    probs = outcome_probs(LinkProfile("node:1", "gw:1", d, los, RadioParams(sf=sf)))
    assert all(0.0 <= p <= 1.0 for p in probs)
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-12)


@given(st.floats(1.0, 20_000.0), st.floats(1.01, 3.0))
def test_derived_delivery_falls_with_distance(d, factor):
    assert derived_deliver_prob(d * factor, RadioParams()) <= derived_deliver_prob(d, RadioParams())


def test_derived_shape():
    near = derived_deliver_prob(187.0, RadioParams())
    far = derived_deliver_prob(50_000.0, RadioParams())
    assert near > 0.99
    assert far == 0.0
    assert outcome_probs(LinkProfile("node:1", "gw:1", 50_000.0)) == (0.0, 0.0, 1.0)
    # higher SF reaches further
    assert derived_deliver_prob(4000, RadioParams(sf=12)) > derived_deliver_prob(4000, RadioParams(sf=7))


def test_obstruction_halves_delivery():
    clear = outcome_probs(LinkProfile("node:1", "gw:1", 1500.0, True))
    blocked = outcome_probs(LinkProfile("node:1", "gw:1", 1500.0, False))
    assert blocked[0] == pytest.approx(clear[0] / 2)


def test_draw_outcome_partitions_unit_interval():
    probs = (0.5, 0.2, 0.3)
    assert draw_outcome(probs, 0.0) is DeliveryOutcome.DELIVERED
    assert draw_outcome(probs, 0.4999) is DeliveryOutcome.DELIVERED
    assert draw_outcome(probs, 0.5) is DeliveryOutcome.ERROR
    assert draw_outcome(probs, 0.6999) is DeliveryOutcome.ERROR
    assert draw_outcome(probs, 0.7) is DeliveryOutcome.MISSED


def test_sampled_frequencies_within_binomial_bounds():
    probs = (0.6215, 0.0764, 0.3021)
    link = LinkProfile("node:1", "gw:1", 1250.0, probs=probs)
    stream = RngStream(4, "radio", "test")
    n = 20_000
    counts = dict.fromkeys(DeliveryOutcome, 0)
    for _ in range(n):
        counts[sample_outcome(link, stream)] += 1
    for outcome, p in zip(DeliveryOutcome, probs):
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(counts[outcome] / n - p) < 4 * sigma


def test_duty_ledger_accumulates_and_enforces():
    free = DutyCycleLedger()
    for _ in range(20):
        assert charge_airtime(free, "node:1", 0, 2000.0)
    assert free.total("node:1", 0) == 40_000.0

    strict = DutyCycleLedger(enforce=True)
    accepted = sum(charge_airtime(strict, "node:1", 0, 2138.112) for _ in range(20))
    assert accepted == 14  # floor(30000 / 2138.112)
    assert strict.total("node:1", 0) <= 30_000.0
    assert charge_airtime(strict, "node:1", 1, 2138.112)  # new day, fresh budget
    with pytest.raises(ValueError):
        charge_airtime(strict, "node:1", 0, 0.0)
