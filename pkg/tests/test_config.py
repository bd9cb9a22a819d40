from __future__ import annotations

import pytest

from adaptsim.config import ConfigError, parse_config, parse_config_string, preset_path
from adaptsim.goals import COST, ENERGY, RESPONSE_TIME

PRESET = preset_path().read_text()


def edit(old, new, text=PRESET):
    assert old in text
    return text.replace(old, new, 1)


def test_preset_deployments(preset):
    na = preset.deployment_for("non-adaptive")
    assert (na.hosts, na.vms) == (70, (("m4.xlarge", 210),))
    for mode in ("self-adaptive", "stimulus-aware", "goal-aware", "time-aware", "meta-aware"):
        d = preset.deployment_for(mode)
        assert d.hosts == 10 and d.vm_total == 15
        assert dict(d.vms) == {"m4.large": 5, "m4.xlarge": 5, "m4.2xlarge": 5}
    assert preset.max_hosts == 1000


def test_preset_hardware(preset):
    h = preset.host_spec
    assert (h.cores, h.mips_per_core, h.ram) == (12, 3067.0, 256.0)
    assert [(t.name, t.vcpus, t.ram, t.cost_rate) for t in preset.vm_types] == [
        ("m4.large", 2, 8.0, 0.1), ("m4.xlarge", 4, 16.0, 0.2), ("m4.2xlarge", 8, 32.0, 0.4)]
    assert preset.trace.instance_duration == 864.0 and max(preset.trace.counts) == 700


def test_preset_goals_tactics_rules(preset):
    goals = preset.goals_model().goals
    assert [(g.attribute, g.weight, g.constraint_value, g.metric) for g in goals] == [
        (RESPONSE_TIME, 0.5, 25.0, "ms"), (ENERGY, 0.2, 25.0, "kWh"), (COST, 0.2, 50.0, "$")]
    assert [t.tactic_id for t in preset.tactics] == [
        "vertical-scaling", "vertical-descaling", "horizontal-scaling", "horizontal-descaling",
        "vm-consolidation", "concurrency", "dynamic-scheduling"]
    assert preset.tactics[-1].variations == (
        "earliest-deadline-first", "least-slack-time", "single-queue", "multi-queue",
        "multi-dynamic-queue")
    table = sorted((r.quality_attribute, r.priority, r.tactic_id) for r in preset.rules)
    assert table == sorted([
        (RESPONSE_TIME, 1, "dynamic-scheduling"), (RESPONSE_TIME, 2, "concurrency"),
        (RESPONSE_TIME, 3, "vertical-scaling"), (RESPONSE_TIME, 4, "horizontal-scaling"),
        (COST, 1, "vm-consolidation"), (COST, 2, "vertical-descaling"),
        (COST, 3, "horizontal-descaling"), (ENERGY, 1, "vm-consolidation"),
        (ENERGY, 2, "vertical-descaling"), (ENERGY, 3, "horizontal-descaling")])


def test_dangling_rule_names_the_rule():
    text = edit("tactic = concurrency\npriority = 2", "tactic = telepathy\npriority = 2")
    with pytest.raises(ConfigError, match=r"\[rule.R2\] tactic: rule R2 .*telepathy"):
        parse_config_string(text)


def test_oversized_deployment_is_rejected():
    text = edit("hosts = 70\nvms = m4.xlarge:210", "hosts = 70\nvms = m4.xlarge:211")
    with pytest.raises(ConfigError, match=r"\[deployment.non-adaptive\] vms: .*fit"):
        parse_config_string(text)


@pytest.mark.parametrize("old, new, match", [
    ("seed = 20170101", "seed = many", r"\[experiment\] seed: expected an integer"),
    ("host_cores = 12\n", "", r"\[datacenter\] host_cores: required"),
    ("cost_rate = 0.1", "cost_rate = 0.1\ncolour = red", r"\[vm_type.m4.large\] colour: unknown"),
    ("service_mix = 1:100", "service_mix = 1:60", r"\[workload\] service_mix"),
    ("weight = 0.5", "weight = 0.9", r"\[goal\.\*\].*sum"),
    ("overhead_clock = model", "overhead_clock = sundial", r"\[experiment\] overhead_clock"),
    ("scheduling_policy = fifo", "scheduling_policy = lottery", r"scheduling_policy"),
    ("meta_period = 5", "meta_period = 0", r"\[awareness\] meta_period"),
    ("[awareness]", "[telemetry]\nx = 1\n[awareness]", r"\[telemetry\] unknown section"),
    ("trace = bundled", "trace = nowhere.txt", r"\[workload\] trace: file not found"),
])
def test_schema_errors_name_section_and_key(old, new, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_string(edit(old, new))


def test_malformed_file():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config_string("no section header\n")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("/nonexistent/config.ini")


def test_trace_path_is_relative_to_config(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    (sub / "trend.txt").write_text("10\n40\n20\n")
    cfg_file = sub / "exp.ini"
    cfg_file.write_text(edit("trace = bundled", "trace = trend.txt"))
    cfg = parse_config(cfg_file)
    assert cfg.trace.counts == (175, 700, 350)
    assert cfg.trace_path == sub / "trend.txt"


def test_overrides_and_duration(preset):
    short = preset.with_overrides(duration=3, seed=1)
    assert len(short.run_trace) == 3 and short.seed == 1 and preset.seed != 1
