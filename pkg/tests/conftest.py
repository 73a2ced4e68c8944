from __future__ import annotations

import copy
import json
from pathlib import Path

import pytest

from lpwansim.scenario import scenario_from_dict

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

HOP1 = (0.6215, 0.0764, 0.3021)
HOP2 = (0.8827, 0.0894, 0.0279)


def one_node_doc(probs=(1.0, 0.0, 0.0), **overrides) -> dict:
    """A single node talking straight to an online gateway."""
    doc = {
        "seed": 11,
        "nodes": [{"id": 1, "label": "plot-a", "position": [100, 0]}],
        "gateways": [{"id": 1, "label": "barn", "position": [0, 0, 3]}],
        "links": [{"from": "node:1", "to": "gw:1", "probs": list(probs)}],
    }
    doc.update(overrides)
    return doc


def two_hop_doc(**overrides) -> dict:
    doc = json.loads((SCENARIOS / "two_hop.json").read_text())
    doc.update(overrides)
    return doc


def ferry_doc(**overrides) -> dict:
    doc = {
        "seed": 5,
        "nodes": [
            {"id": 1, "position": [400, 0], "connectivity": "disconnected"},
            {"id": 2, "position": [50, 0]},
        ],
        "gateways": [{"id": 1, "position": [0, 0]}],
        "links": [{"from": "node:2", "to": "gw:1", "probs": [0.9, 0.05, 0.05]}],
        "ferry": {"interval_s": 86400, "route": [1], "speed_mps": 10},
    }
    doc.update(overrides)
    return doc


def build(doc: dict):
    return scenario_from_dict(copy.deepcopy(doc))


@pytest.fixture
def two_hop():
    return build(two_hop_doc())


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = ("PASS" if report.passed else "FAIL", report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        status, _ = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{status}  {name}")
