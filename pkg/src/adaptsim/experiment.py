"""One simulation per (mode, service) pair, the mode matrix and what-if probes.

A run schedules one interval-boundary event per trace instance.  The
boundary closes the previous interval's metrics and submits the next
instance's requests.  Adaptive modes also get a monitor tick every
``monitoring_interval`` seconds; the tick is followed by an evaluator tick
(which decides) and, when something was decided, an adaptation-execute
event.  After the horizon the remaining work drains and the last interval
is closed.
"""

from __future__ import annotations

import copy
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .adaptation import (AdaptationDecision, AdaptationEngine, ExecutionReport, Executor,
                         Monitor, SelfAdaptiveController)
from .awareness import AwarenessConfig, SelfAwareController
from .broker import Broker
from .cloud import Datacenter
from .config import MODES, ExperimentConfig
from .goals import RESPONSE_TIME
from .kernel import (ADAPTATION_EXECUTE, EVALUATOR_TICK, INTERVAL_BOUNDARY, MONITOR_TICK,
                     Simulator)
from .metrics import (PHASES, ExperimentSummary, IntervalMetrics, OverheadLedger, emit_report,
                      mean, mode_average, write_overhead, write_summary)
from .workload import generate_interval_requests

log = logging.getLogger(__name__)

SERVICES = (1, 2, 3, 4, 5)


class ExperimentError(RuntimeError):
    pass


@dataclass
class RunResult:
    mode: str
    service: str
    summary: ExperimentSummary
    intervals: list
    overhead: dict
    decisions: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    records: list = field(default_factory=list, repr=False)
    events: list = field(default_factory=list, repr=False)


def deploy(dc: Datacenter, deployment) -> None:
    """Power on the deployment's hosts and place its VMs first-fit, largest first."""
    for _ in range(deployment.hosts):
        dc.power_on_host()
    order = sorted(deployment.vms, key=lambda nv: -dc.vm_catalog[nv[0]].mips)
    for name, count in order:
        for _ in range(count):
            dc.provision_vm(name)


class Simulation:
    """A single-threaded run of one mode on one workload."""

    def __init__(self, config: ExperimentConfig, mode: str, service: int | None = None, *,
                 seed: int | None = None, keep_log: bool = False):
        if mode not in MODES:
            raise ExperimentError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
        self.config = config
        self.mode = mode
        self.seed = config.seed if seed is None else seed
        if service is None:
            self.service_mix = dict(config.service_mix)
            self.label = str(next(iter(self.service_mix))) if len(self.service_mix) == 1 \
                else "mix"
        else:
            self.service_mix = {int(service): 100.0}
            self.label = str(service)
        self.trace = config.run_trace
        self.horizon = len(self.trace) * self.trace.instance_duration

        self.kernel = Simulator(keep_log=keep_log)
        self.dc = Datacenter(config.host_spec, config.max_hosts, config.vm_types)
        deploy(self.dc, config.deployment_for(mode))
        self.broker = Broker(self.kernel, self.dc, config.scheduling_policy)
        self.ledger = OverheadLedger(config.overhead_clock, config.overhead_unit)
        self.goals = config.goals_model(runtime=mode.endswith("-aware"))
        rt_goal = self.goals.by_attribute(RESPONSE_TIME)
        self.rt_constraint = rt_goal.constraint_value if rt_goal is not None else None
        self.controller = self._build_controller()
        self.adapting = self.controller is not None

        self.intervals: list[IntervalMetrics] = []
        self._interval_open = -1
        self._record_cursor = 0
        self._energy_mark = 0.0
        self._cost_mark = 0.0
        self._decisions_in_interval = 0
        self._next_request_id = 0
        self._started = False
        self._finished = False

        self.kernel.on(INTERVAL_BOUNDARY, self._on_boundary)
        self.kernel.on(MONITOR_TICK, self._on_monitor)
        self.kernel.on(EVALUATOR_TICK, self._on_evaluate)
        self.kernel.on(ADAPTATION_EXECUTE, self._on_execute)

    def _build_controller(self):
        if self.mode == "non-adaptive":
            return None
        executor = Executor(self.dc, self.broker, self.config.tactics, self.config.scale_vm_type)
        engine = AdaptationEngine(self.config.rules, executor)
        monitor = Monitor(self.broker, self.dc, self.horizon)
        if self.mode == "self-adaptive":
            return SelfAdaptiveController(monitor, self.goals, engine, self.ledger)
        tunables = {k: v for k, v in self.config.awareness.items() if k != "violation_threshold"}
        awareness = AwarenessConfig.for_mode(self.mode, **tunables)
        return SelfAwareController(monitor, self.goals, engine, self.ledger, awareness)

    # -- event handlers --------------------------------------------------

    def _on_boundary(self, event) -> None:
        k = event.payload
        if k > 0:
            self._close_interval(k - 1)
        self._open_interval(k)
        if k + 1 < len(self.trace):
            self.kernel.at((k + 1) * self.trace.instance_duration, INTERVAL_BOUNDARY, k + 1)
        if k == 0 and self.adapting:
            self._schedule_tick(1)

    def _open_interval(self, k: int) -> None:
        self._interval_open = k
        requests = generate_interval_requests(
            self.trace, k, self.service_mix, seed=self.seed,
            arrival_window=self.config.arrival_window, first_id=self._next_request_id,
            deadline_factor=self.config.deadline_factor)
        self._next_request_id += len(requests)
        for request in requests:
            self.broker.submit(request)

    def _schedule_tick(self, j: int) -> None:
        t = j * self.config.monitoring_interval
        if t < self.horizon:
            self.kernel.at(t, MONITOR_TICK, j)

    def _on_monitor(self, event) -> None:
        j = event.payload
        self._schedule_tick(j + 1)
        if not self.adapting:
            return
        sample = self.controller.monitor_tick(self.kernel.now, j)
        self.kernel.at(self.kernel.now, EVALUATOR_TICK, sample)

    def _on_evaluate(self, event) -> None:
        if not self.adapting:
            return
        sample = event.payload
        self.controller.evaluate(sample)
        decision = self.controller.decide(sample)
        if decision is not None:
            self.kernel.at(self.kernel.now, ADAPTATION_EXECUTE, decision)

    def _on_execute(self, event) -> None:
        if not self.adapting:
            return
        report = self.controller.execute(event.payload)
        if report.status == "executed":
            self._decisions_in_interval += 1

    def _close_interval(self, k: int) -> IntervalMetrics:
        now = self.kernel.now
        self.dc.advance(now)
        self.dc.settle()
        records = self.broker.records[self._record_cursor:]
        self._record_cursor = len(self.broker.records)
        energy, cost = self.dc.total_energy, self.dc.total_cost
        violations = 0
        if self.rt_constraint is not None:
            violations = sum(1 for r in records if r.response_time > self.rt_constraint)
        metrics = IntervalMetrics(
            interval_index=k, service=self.label,
            avg_response=mean([r.response_time for r in records]),
            energy_kwh=energy - self._energy_mark, cost_usd=cost - self._cost_mark,
            completed=len(records), violations=violations,
            decisions=self._decisions_in_interval)
        self._energy_mark, self._cost_mark = energy, cost
        self._decisions_in_interval = 0
        self.intervals.append(metrics)
        return metrics

    # -- driving ---------------------------------------------------------

    def start(self) -> None:
        if not self._started:
            self._started = True
            if len(self.trace):
                self.kernel.at(0.0, INTERVAL_BOUNDARY, 0)

    def advance(self, until: float) -> None:
        """Run every event up to ``until`` and pause there."""
        self.start()
        self.kernel.run_until(until)

    def finish(self) -> RunResult:
        self.start()
        if not self._finished:
            self.kernel.run_until(max(self.horizon, self.kernel.now))
            self.kernel.run()  # drain work still running past the horizon
            if self._interval_open >= 0:
                self._close_interval(self._interval_open)
            self._finished = True
        return self.result()

    def run(self) -> RunResult:
        return self.finish()

    @property
    def in_flight(self) -> int:
        return self.broker.queued_count + self.broker.running_count

    def result(self) -> RunResult:
        records = self.broker.records
        times = [r.response_time for r in records]
        avg = mean(times)
        viol = None
        if records and self.rt_constraint is not None:
            viol = 100.0 * sum(1 for t in times if t > self.rt_constraint) / len(times)
        summary = ExperimentSummary(
            mode=self.mode, service=self.label, avg_response=avg, avg_response_weighted=avg,
            energy_kwh=self.dc.total_energy, cost_usd=self.dc.total_cost, violation_pct=viol,
            overhead_s=self.ledger.total, requests=len(records), status="ok",
            per_interval=list(self.intervals))
        controller = self.controller
        return RunResult(
            mode=self.mode, service=self.label, summary=summary, intervals=list(self.intervals),
            overhead=dict(self.ledger.phases),
            decisions=list(controller.decisions) if controller else [],
            reports=list(controller.reports) if controller else [],
            records=list(records), events=list(self.kernel.log))

    def snapshot(self) -> "Simulation":
        """Independent deep copy of the paused simulation."""
        return copy.deepcopy(self)


def what_if(simulation: Simulation, decision: AdaptationDecision | None = None
            ) -> tuple[IntervalMetrics, ExecutionReport | None]:
    """Predict the metrics of the interval in progress under ``decision``.

    The live simulation is untouched: a snapshot applies the decision now,
    runs with its own controller frozen until the current interval closes
    and returns that interval's metrics with the execution report.
    """
    probe = simulation.snapshot()
    probe.adapting = False
    report = None
    if decision is not None:
        if probe.controller is None:
            executor = Executor(probe.dc, probe.broker, probe.config.tactics,
                                probe.config.scale_vm_type)
            report = executor.execute(decision)
        else:
            report = probe.controller.executor.execute(decision)
    probe.start()
    closed = len(probe.intervals)
    duration = probe.trace.instance_duration
    k = max(probe._interval_open, 0)
    if k + 1 < len(probe.trace):
        probe.kernel.run_until((k + 1) * duration)  # boundary k + 1 closes interval k
    else:
        probe.finish()
    if len(probe.intervals) <= closed:
        raise ExperimentError("what-if probe did not close an interval")
    return probe.intervals[closed], report


def run_pair(config: ExperimentConfig, mode: str, service: int | None,
             seed: int | None = None) -> RunResult:
    return Simulation(config, mode, service, seed=seed).run()


def _run_pair_safe(args) -> RunResult | tuple:
    config, mode, service, seed = args
    try:
        return run_pair(config, mode, service, seed)
    except Exception as exc:  # one failing pair must not abort the matrix
        log.exception("run %s/service %s failed", mode, service)
        return (mode, service, f"{type(exc).__name__}: {exc}")


def _failed_summary(mode: str, service: str) -> ExperimentSummary:
    return ExperimentSummary(mode=mode, service=str(service), avg_response=None,
                             avg_response_weighted=None, energy_kwh=0.0, cost_usd=0.0,
                             violation_pct=None, overhead_s=0.0, requests=0,
                             status="failed")


def run_experiment(config: ExperimentConfig, modes: Sequence[str],
                   services: Sequence[int | None] = SERVICES, out_dir: Path | str | None = None,
                   *, seed: int | None = None, workers: int = 1) -> list[ExperimentSummary]:
    """Run every (mode, service) pair on a fresh simulation and emit the reports.

    Per-pair files go to ``out_dir/<mode>/service-<s>/``; the cross-mode
    ``summary.csv`` and ``overhead.csv`` go to ``out_dir``.  Returns the
    per-pair summaries followed by one ``avg`` row per mode.
    """
    unknown = [m for m in modes if m not in MODES]
    if unknown:
        raise ExperimentError(f"unknown mode {unknown[0]!r}")
    jobs = [(config, m, s, seed) for m in modes for s in services]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_pair_safe, jobs))
    else:
        outcomes = [_run_pair_safe(job) for job in jobs]

    pairs: list[ExperimentSummary] = []
    mode_overhead: dict[str, dict] = {}
    for (_, mode, service, _), outcome in zip(jobs, outcomes):
        label = "mix" if service is None else str(service)
        if isinstance(outcome, RunResult):
            pairs.append(outcome.summary)
            acc = mode_overhead.setdefault(mode, {})
            for phase, seconds in outcome.overhead.items():
                acc[phase] = acc.get(phase, 0.0) + seconds
            if out_dir is not None:
                emit_report(Path(out_dir) / mode / f"service-{label}", [outcome.summary],
                            [(mode, outcome.overhead)], outcome.intervals)
        else:
            log.error("pair %s/%s failed: %s", mode, label, outcome[2])
            pairs.append(_failed_summary(mode, label))
            mode_overhead.setdefault(mode, {})

    rows = []
    for mode in dict.fromkeys(modes):
        mode_rows = [s for s in pairs if s.mode == mode]
        rows.extend(mode_rows)
        rows.append(mode_average(mode, mode_rows))
    if out_dir is not None:
        out = Path(out_dir)
        write_summary(out / "summary.csv", rows)
        ledgers = [(m, {p: mode_overhead[m].get(p, 0.0) for p in PHASES})
                   for m in dict.fromkeys(modes)]
        write_overhead(out / "overhead.csv", ledgers)
    return rows


def failed(summaries: Iterable[ExperimentSummary]) -> list[ExperimentSummary]:
    return [s for s in summaries if s.status == "failed"]
