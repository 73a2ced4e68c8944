"""Deterministic discrete-event simulator for LoRa/LoRaWAN field sensor networks."""

from .engine import RunResult, replay_check, run
from .scenario import Scenario, load_scenario, parse_scenario, validate_scenario

__all__ = [
    "RunResult",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "replay_check",
    "run",
    "validate_scenario",
]
__version__ = "0.1.0"
