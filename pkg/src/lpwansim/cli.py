"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 validation or usage error.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from .backend import Backend
from .core import DAY_S, NodeSite, Position
from .engine import run, write_trace
from .nmad import (
    SCOPES,
    build_report,
    render_text,
    report_to_json,
    stability,
    stability_by_node,
    stability_rows,
)
from .scenario import Scenario, ScenarioError, load_scenario, validate_scenario

EXIT_OK, EXIT_IO, EXIT_USAGE = 0, 1, 2
STABILITY_COLUMNS = ("node", "scope", "expected", "normal", "error", "pdr", "per", "pmr")


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code
        self.message = message


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _load(path: str, seed: int | None = None, enforce: bool = False) -> Scenario:
    try:
        scenario = load_scenario(path)
    except OSError as exc:
        raise _Exit(EXIT_IO, f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    except ScenarioError as exc:
        raise _Exit(EXIT_USAGE, f"{path}: {exc}") from exc
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if enforce:
        changes["enforce_duty_cycle"] = True
    if changes:
        scenario = dataclasses.replace(scenario, **changes)
    violations = validate_scenario(scenario)
    if violations:
        raise _Exit(EXIT_USAGE, "\n".join(str(v) for v in violations))
    return scenario


def stability_table(log: list[dict], scenario: Scenario) -> list[dict]:
    """Rows for every node and scope, in node then scope order."""
    counters = stability_by_node(log, scenario.topology, scenario.run_s, scenario.sample_s)
    rows = []
    for node in sorted(counters):
        for scope in SCOPES:
            c = counters[node][scope]
            if c is None:
                continue
            row = {"node": node, "scope": scope, "expected": c.expected, "normal": c.normal, "error": c.error}
            if c.expected:
                r = stability(c)
                row.update(pdr=r.pdr, per=r.per, pmr=r.pmr)
            else:
                row.update(pdr=None, per=None, pmr=None)
            rows.append(row)
    return rows


def _write_rows(path: Path, columns, rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _run_with_exit(fn) -> None:
    try:
        fn()
    except _Exit as exc:
        if exc.message:
            click.echo(exc.message, err=True)
        sys.exit(exc.code)
    sys.exit(EXIT_OK)


@click.group()
def main() -> None:
    """Deterministic LPWAN field-network simulator."""


@main.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("-o", "--out", "out_dir", default=".", show_default=True, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--persist", is_flag=True, help="Also write the record store as store.ndjson.")
@click.option("--trace", is_flag=True, help="Also write the event log as trace.ndjson.")
@click.option("--enforce-duty-cycle", is_flag=True, help="Refuse frames over the daily airtime budget.")
def simulate(scenario_path, out_dir, seed, persist, trace, enforce_duty_cycle):
    """Run a scenario and write readings, stability and report files."""

    def body():
        scenario = _load(scenario_path, seed, enforce_duty_cycle)
        result = run(scenario)
        out = Path(out_dir)
        rows = stability_table(result.log, scenario)
        report_at = max(scenario.run_s, DAY_S)
        hop1 = stability_rows(
            stability_by_node(result.log, scenario.topology, scenario.run_s, scenario.sample_s), "hop1"
        )
        report = build_report(result.backend, scenario.topology.nodes, report_at, DAY_S, hop1)
        try:
            out.mkdir(parents=True, exist_ok=True)
            result.backend.export_csv(out / "readings.csv")
            _write_rows(out / "stability.csv", STABILITY_COLUMNS, rows)
            (out / "nmad_report.json").write_text(report_to_json(report), encoding="utf-8")
            if persist:
                result.backend.save(out / "store.ndjson")
            if trace:
                write_trace(result.log, out / "trace.ndjson")
        except OSError as exc:
            raise _Exit(EXIT_IO, f"cannot write outputs to {out}: {exc}") from exc
        counts = result.backend.counts
        click.echo(
            f"{len(result.log)} events; backend accepted {counts['accepted']}, "
            f"rejected {counts['rejected']}, duplicate {counts['duplicate']}"
        )
        for row in rows:
            if row["scope"] == "end_to_end" and row["pdr"] is not None:
                click.echo(
                    f"node {row['node']}: pdr {row['pdr']:.4f} per {row['per']:.4f} pmr {row['pmr']:.4f}"
                )

    _run_with_exit(body)


SWEEP_COLUMNS = ("seed", "status") + STABILITY_COLUMNS


def _sweep_one(scenario: Scenario, seed: int) -> list[dict]:
    s = dataclasses.replace(scenario, seed=seed)
    try:
        rows = stability_table(run(s).log, s)
    except Exception as exc:  # a failed sub-run is reported, not fatal to the sweep
        return [{"seed": seed, "status": f"failed: {exc}"}]
    return [{"seed": seed, "status": "ok", **r} for r in rows]


def sweep_summary(rows: list[dict]) -> list[dict]:
    groups: dict[tuple[int, str], list[dict]] = {}
    for r in rows:
        if r["status"] == "ok":
            groups.setdefault((r["node"], r["scope"]), []).append(r)
    out = []
    for (node, scope), rs in sorted(groups.items()):
        mean = {"seed": "mean", "status": "ok", "node": node, "scope": scope}
        std = {"seed": "std", "status": "ok", "node": node, "scope": scope}
        for col in ("expected", "normal", "error", "pdr", "per", "pmr"):
            vals = [r[col] for r in rs if r[col] is not None]
            if vals:
                mean[col] = statistics.fmean(vals)
                std[col] = statistics.stdev(vals) if len(vals) > 1 else 0.0
        out += [mean, std]
    return out


@main.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("-n", "--n-seeds", type=click.IntRange(min=1), required=True, help="Number of seeds.")
@click.option("-o", "--out", "out_dir", default=".", show_default=True)
@click.option("--seed", type=int, default=None, help="First seed (default: the scenario seed).")
@click.option("-j", "--jobs", type=click.IntRange(min=1), default=1, show_default=True)
def sweep(scenario_path, n_seeds, out_dir, seed, jobs):
    """Run seeds seed..seed+N-1 and write sweep.csv with summary rows."""

    def body():
        scenario = _load(scenario_path, seed)
        seeds = range(scenario.seed, scenario.seed + n_seeds)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                chunks = list(pool.map(_sweep_one, [scenario] * n_seeds, seeds))
        else:
            chunks = [_sweep_one(scenario, s) for s in seeds]
        rows = [r for chunk in chunks for r in chunk]
        failed = [r["seed"] for r in rows if r["status"] != "ok"]
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            _write_rows(out / "sweep.csv", SWEEP_COLUMNS, rows + sweep_summary(rows))
        except OSError as exc:
            raise _Exit(EXIT_IO, f"cannot write {out / 'sweep.csv'}: {exc}") from exc
        click.echo(f"{n_seeds - len(failed)} of {n_seeds} seeds completed")
        if failed:
            raise _Exit(EXIT_IO, f"sub-runs failed for seeds {failed}; sweep.csv is partial")

    _run_with_exit(body)


@main.command()
@click.argument("store_path", metavar="STORE")
@click.option("--scenario", "scenario_path", default=None, help="Scenario naming the nodes to report on.")
@click.option("--at", "at", type=int, default=None, help="Report time in seconds (default: last receipt).")
@click.option("--window", type=click.IntRange(min=1), default=DAY_S, show_default=True)
@click.option("--json-out", default=None, help="Write the JSON report here instead of standard output.")
def report(store_path, scenario_path, at, window, json_out):
    """Render a monitoring report from a persisted record store."""

    def body():
        try:
            store = Backend.load(store_path)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise _Exit(EXIT_IO, f"cannot read store {store_path}: {exc}") from exc
        if scenario_path is not None:
            nodes = _load(scenario_path).topology.nodes
        else:
            ids = sorted({r.reading.node for r in store.records})
            nodes = tuple(NodeSite(i, Position(0.0, 0.0)) for i in ids)
        t = at if at is not None else max((r.received_at for r in store.records), default=0)
        t = max(t, window)
        rep = build_report(store, nodes, t, window)
        click.echo(render_text(rep), nl=False)
        text = report_to_json(rep)
        if json_out is None:
            click.echo(text, nl=False)
        else:
            try:
                Path(json_out).write_text(text, encoding="utf-8")
            except OSError as exc:
                raise _Exit(EXIT_IO, f"cannot write {json_out}: {exc}") from exc

    _run_with_exit(body)


if __name__ == "__main__":  # pragma: no cover
    main()
