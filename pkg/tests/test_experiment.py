from __future__ import annotations

import math

import pytest

from adaptsim import Simulation, run_experiment, what_if
from adaptsim.adaptation import AdaptationDecision
from adaptsim.experiment import ExperimentError, failed
from adaptsim.metrics import read_intervals, read_summary
from oracles import static_cost, static_energy_kwh, violation_recount


def test_non_adaptive_energy_and_cost_match_static_oracle(preset):
    sim = Simulation(preset, "non-adaptive", 4)
    res = sim.run()
    horizon = sim.kernel.now
    vm_host = {vm.id: vm.host_id for vm in sim.dc.vms.values()}
    expected = static_energy_kwh(70, horizon, res.records, vm_host, 12 * 3067.0)
    assert math.isclose(res.summary.energy_kwh, expected, rel_tol=1e-9)
    assert math.isclose(res.summary.cost_usd, static_cost([0.2] * 210, horizon), rel_tol=1e-9)


def test_interval_metrics_cover_the_run(preset):
    res = Simulation(preset, "goal-aware", 2).run()
    assert [m.interval_index for m in res.intervals] == list(range(30))
    assert sum(m.completed for m in res.intervals) == sum(preset.trace.counts)
    assert sum(m.decisions for m in res.intervals) == \
        sum(1 for r in res.reports if r.status == "executed")
    times = [r.response_time for r in res.records]
    assert res.summary.violation_pct == violation_recount(times, 25.0)
    assert sum(m.violations for m in res.intervals) == sum(t > 25.0 for t in times)


def test_extra_modes_run(preset):
    for mode in ("time-aware", "meta-aware"):
        res = Simulation(preset, mode, 2).run()
        assert res.summary.requests == sum(preset.trace.counts)
        assert res.summary.overhead_s > 0


def test_meta_awareness_switches_paths(preset):
    sim = Simulation(preset, "meta-aware", 2)
    sim.run()
    paths = {p for _, p in sim.controller.path_log}
    assert len(sim.controller.path_log) == 29 // 5
    assert {"goal", "time"} <= paths


def test_unknown_mode(preset):
    with pytest.raises(ExperimentError):
        Simulation(preset, "omniscient", 1)


def test_mixed_service_run(preset):
    cfg = preset.with_overrides(service_mix={1: 50.0, 2: 50.0}, duration=3)
    res = Simulation(cfg, "self-adaptive").run()
    assert res.service == "mix"
    assert {r.service_type_id for r in res.records} == {1, 2}


def test_what_if_leaves_live_run_untouched(preset):
    sim = Simulation(preset, "stimulus-aware", 2)
    sim.advance(23 * 864.0)
    hosts, vms, now = sim.dc.powered_count, sim.dc.vm_count, sim.kernel.now
    baseline, none_report = what_if(sim)
    scaled, report = what_if(sim, AdaptationDecision("horizontal-scaling", 2, ("probe",), now,
                                                     "probe", 23))
    assert none_report is None and report.status == "executed"
    assert baseline.interval_index == scaled.interval_index == 23
    assert scaled.avg_response < baseline.avg_response
    assert scaled.energy_kwh > baseline.energy_kwh
    assert (sim.dc.powered_count, sim.dc.vm_count, sim.kernel.now) == (hosts, vms, now)
    full = sim.finish()
    assert full.intervals[23] == baseline  # the probe predicted the unperturbed interval


def test_run_order_does_not_matter(preset):
    cfg = preset.with_overrides(duration=6)
    a = [Simulation(cfg, m, 2).run().summary for m in ("goal-aware", "self-adaptive")]
    b = [Simulation(cfg, m, 2).run().summary for m in ("self-adaptive", "goal-aware")]
    assert a == b[::-1]


def test_matrix_files_and_row_counts(preset, tmp_path):
    cfg = preset.with_overrides(duration=4)
    modes = ["non-adaptive", "self-adaptive", "stimulus-aware", "goal-aware"]
    rows = run_experiment(cfg, modes, [1, 2, 3, 4, 5], tmp_path)
    assert len(rows) == 4 * 5 + 4
    assert read_summary(tmp_path / "summary.csv") == rows
    per_pair = read_intervals(tmp_path / "goal-aware" / "service-3" / "intervals.csv")
    assert len(per_pair) == 4
    assert (tmp_path / "overhead.csv").read_text().count("\n") == 1 + 4 * 4


def test_parallel_workers_match_serial(preset, tmp_path):
    cfg = preset.with_overrides(duration=3)
    serial = run_experiment(cfg, ["self-adaptive", "goal-aware"], [2, 5], tmp_path / "s")
    parallel = run_experiment(cfg, ["self-adaptive", "goal-aware"], [2, 5], tmp_path / "p",
                              workers=2)
    assert serial == parallel
    assert (tmp_path / "s" / "summary.csv").read_bytes() == \
        (tmp_path / "p" / "summary.csv").read_bytes()


def test_failing_pair_is_isolated(preset, tmp_path, monkeypatch):
    original = Simulation._on_execute

    def explode(self, event):
        if self.label == "2":
            raise RuntimeError("injected")
        return original(self, event)

    monkeypatch.setattr(Simulation, "_on_execute", explode)
    rows = run_experiment(preset, ["self-adaptive"], [1, 2], tmp_path)
    assert [(s.service, s.status) for s in rows] == [("1", "ok"), ("2", "failed"),
                                                      ("avg", "partial")]
    assert failed(rows)[0].service == "2"
