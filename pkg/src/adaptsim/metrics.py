"""Interval metrics, run summaries, controller overhead and CSV output."""

from __future__ import annotations

import csv
import math
import os
import tempfile
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PHASES = ("monitoring", "detecting", "deciding", "executing")

INTERVAL_COLUMNS = ("interval", "service", "avg_response", "energy_kwh", "cost_usd",
                    "completed", "violations", "decisions")
SUMMARY_COLUMNS = ("mode", "service", "avg_response", "avg_response_weighted", "energy_kwh",
                   "cost_usd", "violation_pct", "overhead_s", "requests", "status")
OVERHEAD_COLUMNS = ("mode", "phase", "seconds")


def mean(values: Sequence[float]) -> float | None:
    """Arithmetic mean that returns the common value exactly when all values agree."""
    if not values:
        return None
    base = min(values)
    return base + math.fsum(v - base for v in values) / len(values)


class OverheadLedger:
    """Controller time per phase, in seconds.

    With ``clock="wall"`` each charge is the measured ``perf_counter`` time
    since ``started``.  With ``clock="model"`` it is ``units * unit_cost``,
    where ``units`` counts the items the phase actually processed; this
    keeps reports byte-reproducible.  Every charge is strictly positive.
    """

    def __init__(self, clock: str = "model", unit_cost: float = 1e-3):
        if clock not in ("model", "wall"):
            raise ValueError(f"unknown overhead clock {clock!r}")
        self.clock = clock
        self.unit_cost = unit_cost
        self.phases = {p: 0.0 for p in PHASES}
        self.calls = {p: 0 for p in PHASES}

    @staticmethod
    def start() -> float:
        return time.perf_counter()

    def charge(self, phase: str, started: float, units: int = 1) -> float:
        if phase not in self.phases:
            raise KeyError(phase)
        if self.clock == "wall":
            seconds = max(time.perf_counter() - started, 1e-9)
        else:
            seconds = max(units, 1) * self.unit_cost
        self.phases[phase] += seconds
        self.calls[phase] += 1
        return seconds

    def charge_split(self, started: float, units: dict) -> None:
        """Charge several phases measured as one span; wall time is split by units."""
        if self.clock == "model":
            for phase, n in units.items():
                self.charge(phase, started, n)
            return
        elapsed = max(time.perf_counter() - started, 1e-9)
        total_units = sum(max(n, 1) for n in units.values())
        for phase, n in units.items():
            self.phases[phase] += elapsed * max(n, 1) / total_units
            self.calls[phase] += 1

    @property
    def total(self) -> float:
        return math.fsum(self.phases.values())


def overhead_total(ledger: OverheadLedger | dict) -> float:
    phases = ledger.phases if isinstance(ledger, OverheadLedger) else ledger
    return math.fsum(phases.values())


@dataclass
class IntervalMetrics:
    interval_index: int
    service: str
    avg_response: float | None
    energy_kwh: float
    cost_usd: float
    completed: int
    violations: int  # completed requests above the response-time constraint
    decisions: int

    def row(self) -> list:
        return [self.interval_index, self.service, _fmt(self.avg_response),
                _fmt(self.energy_kwh), _fmt(self.cost_usd), self.completed,
                self.violations, self.decisions]


@dataclass
class ExperimentSummary:
    mode: str
    service: str
    avg_response: float | None
    avg_response_weighted: float | None
    energy_kwh: float
    cost_usd: float
    violation_pct: float | None
    overhead_s: float
    requests: int
    status: str = "ok"
    per_interval: list = field(default_factory=list, repr=False, compare=False)

    def row(self) -> list:
        return [self.mode, self.service, _fmt(self.avg_response),
                _fmt(self.avg_response_weighted), _fmt(self.energy_kwh), _fmt(self.cost_usd),
                _fmt(self.violation_pct), _fmt(self.overhead_s), self.requests, self.status]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


def violation_percentage(records: Iterable, constraint: float) -> dict[int, float | None]:
    """Percentage of response records above ``constraint``, per service type."""
    totals: dict[int, int] = defaultdict(int)
    above: dict[int, int] = defaultdict(int)
    for rec in records:
        totals[rec.service_type_id] += 1
        if rec.response_time > constraint:
            above[rec.service_type_id] += 1
    return {s: 100.0 * above[s] / n if n else None for s, n in sorted(totals.items())}


def mode_average(mode: str, summaries: Sequence[ExperimentSummary]) -> ExperimentSummary:
    """The per-mode ``avg`` row: unweighted mean of service rows plus a request-weighted mean."""
    ok = [s for s in summaries if s.status == "ok"]
    resp = [s.avg_response for s in ok if s.avg_response is not None]
    weighted_num = math.fsum(s.avg_response * s.requests for s in ok if s.avg_response is not None)
    n = sum(s.requests for s in ok if s.avg_response is not None)
    viol = [s.violation_pct for s in ok if s.violation_pct is not None]
    return ExperimentSummary(
        mode=mode,
        service="avg",
        avg_response=mean(resp),
        avg_response_weighted=weighted_num / n if n else None,
        energy_kwh=mean([s.energy_kwh for s in ok]) if ok else 0.0,
        cost_usd=mean([s.cost_usd for s in ok]) if ok else 0.0,
        violation_pct=mean(viol),
        overhead_s=mean([s.overhead_s for s in ok]) if ok else 0.0,
        requests=sum(s.requests for s in ok),
        status="ok" if len(ok) == len(summaries) else "partial",
    )


def _atomic_write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_intervals(path, intervals: Iterable[IntervalMetrics]) -> Path:
    return _atomic_write_csv(path, INTERVAL_COLUMNS, (m.row() for m in intervals))


def write_summary(path, summaries: Iterable[ExperimentSummary]) -> Path:
    return _atomic_write_csv(path, SUMMARY_COLUMNS, (s.row() for s in summaries))


def write_overhead(path, ledgers: Sequence[tuple[str, dict]]) -> Path:
    rows = [[mode, phase, _fmt(float(phases[phase]))] for mode, phases in ledgers
            for phase in PHASES]
    return _atomic_write_csv(path, OVERHEAD_COLUMNS, rows)


def emit_report(out_dir, summaries: Sequence[ExperimentSummary],
                overhead: Sequence[tuple[str, dict]] = (),
                intervals: Sequence[IntervalMetrics] = ()) -> list[Path]:
    """Write ``intervals.csv``, ``summary.csv`` and ``overhead.csv`` into ``out_dir``.

    ``summaries`` holds per-service rows; one ``avg`` row per mode is appended.
    Existing files are replaced atomically.
    """
    out_dir = Path(out_dir)
    rows = []
    modes = list(dict.fromkeys(s.mode for s in summaries))
    for mode in modes:
        mode_rows = [s for s in summaries if s.mode == mode and s.service != "avg"]
        rows.extend(mode_rows)
        if mode_rows:
            rows.append(mode_average(mode, mode_rows))
    return [
        write_intervals(out_dir / "intervals.csv", intervals),
        write_summary(out_dir / "summary.csv", rows),
        write_overhead(out_dir / "overhead.csv", overhead),
    ]


def read_summary(path) -> list[ExperimentSummary]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ExperimentSummary(
                mode=row["mode"], service=row["service"],
                avg_response=_parse_float(row["avg_response"]),
                avg_response_weighted=_parse_float(row["avg_response_weighted"]),
                energy_kwh=float(row["energy_kwh"]), cost_usd=float(row["cost_usd"]),
                violation_pct=_parse_float(row["violation_pct"]),
                overhead_s=float(row["overhead_s"]), requests=int(row["requests"]),
                status=row["status"]))
    return out


def read_intervals(path) -> list[IntervalMetrics]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(IntervalMetrics(
                interval_index=int(row["interval"]), service=row["service"],
                avg_response=_parse_float(row["avg_response"]),
                energy_kwh=float(row["energy_kwh"]), cost_usd=float(row["cost_usd"]),
                completed=int(row["completed"]), violations=int(row["violations"]),
                decisions=int(row["decisions"])))
    return out


def format_table(summaries: Sequence[ExperimentSummary]) -> str:
    """Aligned plain-text rendering of summary rows."""
    header = ("mode", "service", "resp", "energy kWh", "cost $", "viol %", "overhead s", "status")
    body = []
    for s in summaries:
        body.append((s.mode, s.service,
                     "-" if s.avg_response is None else f"{s.avg_response:.2f}",
                     f"{s.energy_kwh:.2f}", f"{s.cost_usd:.2f}",
                     "-" if s.violation_pct is None else f"{s.violation_pct:.2f}",
                     f"{s.overhead_s:.3f}", s.status))
    widths = [max(len(str(r[i])) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(str(c).rjust(w) if i >= 2 else str(c).ljust(w)
                       for i, (c, w) in enumerate(zip(r, widths))) for r in [header, *body]]
    return "\n".join(lines)

