"""Backend ingestion: decode, deduplicate, range-filter, store, query, export."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .core import Reading
from .gateway import DecodeError, decode_payload

RADIO = "radio"
FERRY = "ferry"

CSV_COLUMNS = (
    "node_id",
    "seq",
    "timestamp_s",
    "temperature_c",
    "humidity_pct",
    "vwc_6in",
    "vwc_12in",
    "nitrate_mg_l",
    "battery_pct",
)


class ExportError(OSError):
    """Writing a CSV export failed; ``partial`` names any leftover file."""

    def __init__(self, msg: str, partial: str | None = None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class FilterRanges:
    temperature_c: tuple[float, float] = (-40.0, 125.0)
    humidity_pct: tuple[float, float] = (0.0, 100.0)
    vwc: tuple[float, float] = (0.0, 0.7)
    nitrate_mg_l: tuple[float, float] = (0.0, 100.0)
    battery_pct: tuple[float, float] = (0.0, 100.0)

    def problems(self) -> list[str]:
        return [
            f"filter range {name} has low > high"
            for name, (lo, hi) in asdict(self).items()
            if lo > hi
        ]

    def checks(self) -> list[tuple[str, tuple[float, float]]]:
        # Reading schema order decides which violation is reported
        return [
            ("temperature_c", self.temperature_c),
            ("humidity_pct", self.humidity_pct),
            ("vwc_6in", self.vwc),
            ("vwc_12in", self.vwc),
            ("nitrate_mg_l", self.nitrate_mg_l),
            ("battery_pct", self.battery_pct),
        ]


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    field: str | None = None
    bound: str | None = None  # "lower" or "upper"
    limit: float | None = None

    def to_json(self):
        if self.accepted:
            return "accepted"
        return {"rejected": self.field, "bound": self.bound, "limit": self.limit}

    @classmethod
    def from_json(cls, obj) -> Verdict:
        if obj == "accepted":
            return ACCEPT
        return cls(False, obj["rejected"], obj["bound"], obj["limit"])


ACCEPT = Verdict(True)


def apply_filter(reading: Reading, ranges: FilterRanges) -> Verdict:
    for name, (lo, hi) in ranges.checks():
        v = getattr(reading, name)
        if v < lo:
            return Verdict(False, name, "lower", lo)
        if v > hi:
            return Verdict(False, name, "upper", hi)
    return ACCEPT


@dataclass(frozen=True)
class StoreRecord:
    reading: Reading
    received_at: int
    path: str
    verdict: Verdict

    def to_json(self) -> dict:
        d = asdict(self.reading)
        d["received_at"] = self.received_at
        d["path"] = self.path
        d["verdict"] = self.verdict.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> StoreRecord:
        reading = Reading(**{k: d[k] for k in Reading.__dataclass_fields__})
        return cls(reading, d["received_at"], d["path"], Verdict.from_json(d["verdict"]))


@dataclass(frozen=True)
class IngestResult:
    status: str  # accepted | rejected | duplicate | decode-error
    record: StoreRecord | None = None


@dataclass
class Backend:
    ranges: FilterRanges = field(default_factory=FilterRanges)
    records: list[StoreRecord] = field(default_factory=list)
    index: dict[tuple[int, int], StoreRecord] = field(default_factory=dict)
    counts: dict[str, int] = field(
        default_factory=lambda: {"accepted": 0, "rejected": 0, "duplicate": 0, "decode-error": 0}
    )

    def ingest(self, payload: bytes, received_at: int, path: str = RADIO) -> IngestResult:
        try:
            reading = decode_payload(payload)
        except DecodeError:
            self.counts["decode-error"] += 1
            return IngestResult("decode-error")
        key = (reading.node, reading.seq)
        if key in self.index:
            self.counts["duplicate"] += 1
            return IngestResult("duplicate")
        record = StoreRecord(reading, received_at, path, apply_filter(reading, self.ranges))
        self._add(record)
        status = "accepted" if record.verdict.accepted else "rejected"
        self.counts[status] += 1
        return IngestResult(status, record)

    def _add(self, record: StoreRecord) -> None:
        self.records.append(record)
        self.index[(record.reading.node, record.reading.seq)] = record

    def accepted(self) -> Iterable[StoreRecord]:
        return (r for r in self.records if r.verdict.accepted)

    def query(self, node: int | None, start: int, end: int) -> list[Reading]:
        """Accepted readings with ``start <= sampled_at <= end``, oldest first."""
        if start > end:
            raise ValueError(f"empty time range: start {start} > end {end}")
        rows = [
            r.reading
            for r in self.accepted()
            if (node is None or r.reading.node == node) and start <= r.reading.sampled_at <= end
        ]
        rows.sort(key=lambda r: (r.sampled_at, r.node, r.seq))
        return rows

    def export_csv(
        self, sink: str | os.PathLike | IO[str], node: int | None = None,
        start: int = 0, end: int | None = None,
    ) -> int:
        if end is None:
            end = max((r.reading.sampled_at for r in self.records), default=start)
            end = max(end, start)
        rows = self.query(node, start, end)
        if isinstance(sink, (str, os.PathLike)):
            target = Path(sink)
            partial = target.with_name(target.name + ".partial")
            try:
                with open(partial, "w", newline="", encoding="utf-8") as fh:
                    _write_csv(fh, rows)
                os.replace(partial, target)
            except OSError as exc:
                raise ExportError(f"could not write {target}: {exc}", str(partial)) from exc
            return len(rows)
        try:
            _write_csv(sink, rows)
        except OSError as exc:
            raise ExportError(f"could not write CSV: {exc}") from exc
        return len(rows)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json()) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike, ranges: FilterRanges | None = None) -> Backend:
        backend = cls(ranges or FilterRanges())
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = StoreRecord.from_json(json.loads(line))
                    backend._add(record)
                    backend.counts["accepted" if record.verdict.accepted else "rejected"] += 1
        return backend

    def snapshot(self) -> dict:
        return {
            "counts": dict(self.counts),
            "records": [r.to_json() for r in self.records],
        }


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _write_csv(fh: IO[str], rows: list[Reading]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r.node,
                r.seq,
                r.sampled_at,
                _fmt(r.temperature_c),
                _fmt(r.humidity_pct),
                _fmt(r.vwc_6in),
                _fmt(r.vwc_12in),
                _fmt(r.nitrate_mg_l),
                _fmt(r.battery_pct),
            ]
        )

