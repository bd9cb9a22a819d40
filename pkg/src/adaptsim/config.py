"""Experiment configuration: an INI file with one section per entity.

Section layout (see ``docs/config-schema.md`` for every key)::

    [experiment]            seed, duration, output_dir, overhead_clock, ...
    [datacenter]            max_hosts, host cores / MIPS / power calibration
    [vm_type.<name>]        vcpus, mips_per_vcpu, ram, cost_rate
    [deployment.<mode>]     hosts, vms = <type>:<count>, ...
    [workload]              trace, cap, instance_duration, service_mix, ...
    [goal.<slug>]           goal fields
    [tactic.<id>]           catalogue entry
    [rule.<id>]             attribute, tactic, priority
    [awareness]             tunables of the self-aware controllers

``deployment.adaptive`` applies to every mode without a section of its own.
Relative trace paths resolve against the directory holding the file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .adaptation import (CONCURRENCY, CONSOLIDATE, SCALE_HOSTS, SCALE_VMS, SCHEDULE,
                         AdaptationRule, AdaptationTactic, validate_rules)
from .broker import POLICIES
from .cloud import HostSpec, VmType
from .goals import GoalConfigError, GoalsModel, load_goals
from .workload import (SERVICE_TYPES, WorkloadError, WorkloadTrace, bundled_trace_path,
                       compress_and_scale, load_trend)

MODES = ("non-adaptive", "self-adaptive", "stimulus-aware", "goal-aware", "time-aware",
         "meta-aware")
COMPARISON_MODES = MODES[:4]
ACTIONS = (SCALE_VMS, SCALE_HOSTS, CONSOLIDATE, SCHEDULE, CONCURRENCY)


class ConfigError(ValueError):
    """Schema violation; the message names the section and key."""


@dataclass(frozen=True)
class Deployment:
    hosts: int
    vms: tuple  # ((type name, count), ...)

    @property
    def vm_total(self) -> int:
        return sum(n for _, n in self.vms)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    duration: int | None
    output_dir: Path
    overhead_clock: str
    overhead_unit: float
    monitoring_interval: float
    host_spec: HostSpec
    max_hosts: int
    vm_types: tuple
    deployments: dict
    trace_path: Path
    trace: WorkloadTrace
    arrival_window: float | None
    service_mix: dict
    deadline_factor: float
    scheduling_policy: str
    scale_vm_type: str
    goals: tuple  # mappings accepted by load_goals
    tactics: tuple
    rules: tuple
    awareness: dict = field(default_factory=dict)
    source: Path | None = None

    def deployment_for(self, mode: str) -> Deployment:
        if mode in self.deployments:
            return self.deployments[mode]
        if mode == "non-adaptive":
            raise ConfigError("[deployment.non-adaptive] missing")
        if "adaptive" not in self.deployments:
            raise ConfigError(f"[deployment.adaptive] missing (needed by {mode})")
        return self.deployments["adaptive"]

    def goals_model(self, runtime: bool = False) -> GoalsModel:
        model = load_goals(self.goals)
        if runtime:
            model = model.as_runtime(self.awareness.get("violation_threshold", 0.9))
        return model

    @property
    def run_trace(self) -> WorkloadTrace:
        """The trace cut to ``duration`` instances."""
        if self.duration is None or self.duration >= len(self.trace):
            return self.trace
        return replace(self.trace, counts=self.trace.counts[:self.duration])

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def preset_path() -> Path:
    return Path(str(resources.files("adaptsim") / "data" / "preset.ini"))


def bundled_preset() -> ExperimentConfig:
    return parse_config(preset_path())


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, section: str):
        self.parser = parser
        self.section = section
        self.used = set()

    def _raw(self, key: str, default):
        if self.parser.has_option(self.section, key):
            self.used.add(key)
            return self.parser.get(self.section, key).strip()
        if default is _REQUIRED:
            raise ConfigError(f"[{self.section}] {key}: required key missing")
        return default

    def _convert(self, key, default, conv, what):
        raw = self._raw(key, default)
        if raw is default:
            return default
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"[{self.section}] {key}: expected {what}, got {raw!r}") from None

    def str(self, key, default=None):
        return self._raw(key, default)

    def int(self, key, default=None):
        return self._convert(key, default, int, "an integer")

    def float(self, key, default=None):
        return self._convert(key, default, float, "a number")

    def optional_float(self, key):
        raw = self._raw(key, "")
        if raw in ("", "none"):
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.section}] {key}: expected a number, got {raw!r}") from None

    def error(self, key, problem):
        return ConfigError(f"[{self.section}] {key}: {problem}")

    def check_unknown(self):
        extra = set(self.parser.options(self.section)) - self.used
        if extra:
            raise ConfigError(f"[{self.section}] {sorted(extra)[0]}: unknown key")


_REQUIRED = object()


def _pairs(reader: _Reader, key: str, text: str) -> list[tuple[str, str]]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition(":")
        if not sep:
            raise reader.error(key, f"expected name:value, got {item!r}")
        out.append((name.strip(), value.strip()))
    return out


def _parse_host(parser) -> tuple[HostSpec, int, str]:
    r = _Reader(parser, "datacenter")
    max_hosts = r.int("max_hosts", 1000)
    scale_type = r.str("scale_vm_type", "m4.xlarge")
    if max_hosts < 1:
        raise r.error("max_hosts", "must be >= 1")
    try:
        spec = HostSpec(cores=r.int("host_cores", _REQUIRED),
                        mips_per_core=r.float("host_mips_per_core", _REQUIRED),
                        ram=r.float("host_ram", 256.0),
                        idle_power=r.float("idle_power", _REQUIRED),
                        max_power=r.float("max_power", _REQUIRED),
                        name=r.str("host_name", "host"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[datacenter] host: {exc}") from None
    r.check_unknown()
    return spec, max_hosts, scale_type


def _parse_vm_types(parser) -> tuple:
    types = []
    for section in parser.sections():
        if not section.startswith("vm_type."):
            continue
        r = _Reader(parser, section)
        name = section.split(".", 1)[1]
        try:
            types.append(VmType(name, r.int("vcpus", _REQUIRED),
                                r.float("mips_per_vcpu", _REQUIRED),
                                r.float("ram", 0.0), r.float("cost_rate", _REQUIRED)))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{section}] {exc}") from None
        r.check_unknown()
    if not types:
        raise ConfigError("[vm_type.*] at least one VM type is required")
    return tuple(types)


def _fits(spec: HostSpec, hosts: int, vm_types: dict, vms) -> bool:
    """First-fit of the deployment, largest VMs first, into ``hosts`` hosts."""
    free = [spec.capacity_mips] * hosts
    demands = sorted((vm_types[n].mips for n, c in vms for _ in range(c)), reverse=True)
    for mips in demands:
        for i, left in enumerate(free):
            if mips <= left + 1e-6:
                free[i] = left - mips
                break
        else:
            return False
    return True


def _parse_deployments(parser, spec, max_hosts, vm_types) -> dict:
    by_name = {t.name: t for t in vm_types}
    out = {}
    for section in parser.sections():
        if not section.startswith("deployment."):
            continue
        key = section.split(".", 1)[1]
        if key != "adaptive" and key not in MODES:
            raise ConfigError(f"[{section}] unknown mode {key!r}")
        r = _Reader(parser, section)
        hosts = r.int("hosts", _REQUIRED)
        if not 1 <= hosts <= max_hosts:
            raise r.error("hosts", f"{hosts} outside [1, {max_hosts}]")
        vms = []
        for name, count in _pairs(r, "vms", r.str("vms", _REQUIRED)):
            if name not in by_name:
                raise r.error("vms", f"unknown VM type {name!r}")
            try:
                n = int(count)
            except ValueError:
                raise r.error("vms", f"count for {name} is not an integer") from None
            if n < 0:
                raise r.error("vms", f"negative count for {name}")
            vms.append((name, n))
        if sum(n for _, n in vms) < 1:
            raise r.error("vms", "a deployment needs at least one VM")
        if not _fits(spec, hosts, by_name, vms):
            raise r.error("vms", f"deployment does not fit on {hosts} hosts")
        r.check_unknown()
        out[key] = Deployment(hosts, tuple(vms))
    if "non-adaptive" not in out:
        raise ConfigError("[deployment.non-adaptive] section missing")
    return out


def _parse_workload(parser, base: Path):
    r = _Reader(parser, "workload")
    trace_text = r.str("trace", "bundled")
    if trace_text == "bundled":
        path = bundled_trace_path()
    else:
        path = Path(trace_text)
        if not path.is_absolute():
            path = base / path
    if not path.exists():
        raise r.error("trace", f"file not found: {path}")
    try:
        raw = load_trend(path)
        trace = compress_and_scale(raw, r.int("cap", 700), r.float("instance_duration", 864.0))
    except WorkloadError as exc:
        raise r.error("trace", str(exc)) from None
    window = r.optional_float("arrival_window")
    if window is not None and not 0 < window <= trace.instance_duration:
        raise r.error("arrival_window", f"{window} outside (0, {trace.instance_duration}]")
    mix = {}
    for sid, share in _pairs(r, "service_mix", r.str("service_mix", "1:100")):
        try:
            sid_i, share_f = int(sid), float(share)
        except ValueError:
            raise r.error("service_mix", f"bad entry {sid}:{share}") from None
        if sid_i not in SERVICE_TYPES:
            raise r.error("service_mix", f"unknown service type {sid_i}")
        mix[sid_i] = share_f
    if abs(sum(mix.values()) - 100.0) > 1e-9:
        raise r.error("service_mix", f"shares sum to {sum(mix.values())}, expected 100")
    deadline_factor = r.float("deadline_factor", 10.0)
    policy = r.str("scheduling_policy", "fifo")
    if policy not in POLICIES:
        raise r.error("scheduling_policy", f"unknown policy {policy!r}")
    r.check_unknown()
    return path, trace, window, mix, deadline_factor, policy


_GOAL_KEYS = ("goal_id", "name", "constraint_value", "metric", "objective", "weight",
              "attribute", "scope", "violation_threshold", "user_id")


def _parse_goals(parser) -> tuple:
    entries = []
    for section in parser.sections():
        if not section.startswith("goal."):
            continue
        extra = set(parser.options(section)) - set(_GOAL_KEYS)
        if extra:
            raise ConfigError(f"[{section}] {sorted(extra)[0]}: unknown key")
        entries.append({k: parser.get(section, k).strip() for k in parser.options(section)})
    try:
        load_goals(entries)
    except GoalConfigError as exc:
        raise ConfigError(f"[goal.*] {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"[goal.*] bad number: {exc}") from None
    return tuple(entries)


def _parse_tactics(parser) -> tuple:
    tactics = []
    for section in parser.sections():
        if not section.startswith("tactic."):
            continue
        r = _Reader(parser, section)
        action = r.str("action", _REQUIRED)
        if action not in ACTIONS:
            raise r.error("action", f"unknown action {action!r}")
        raw_var = [v.strip() for v in r.str("variations", "").split(",") if v.strip()]
        if action in (SCHEDULE, CONCURRENCY):
            bad = [v for v in raw_var if v not in POLICIES]
            if bad:
                raise r.error("variations", f"unknown policy {bad[0]!r}")
            variations = tuple(raw_var)
        else:
            try:
                variations = tuple(int(v) for v in raw_var)
            except ValueError:
                raise r.error("variations", "expected integers") from None
        lo, hi = r.optional_float("min_limit"), r.optional_float("max_limit")
        if lo is not None and hi is not None and lo > hi:
            raise r.error("min_limit", f"{lo} exceeds max_limit {hi}")
        tactics.append(AdaptationTactic(
            tactic_id=section.split(".", 1)[1], description=r.str("description", ""),
            affected_object=r.str("affected_object", _REQUIRED), change=r.str("change", _REQUIRED),
            action=action, min_limit=lo, max_limit=hi, variations=variations))
        r.check_unknown()
    if not tactics:
        raise ConfigError("[tactic.*] at least one tactic is required")
    return tuple(tactics)


def _parse_rules(parser, tactics) -> tuple:
    rules = []
    known = {t.tactic_id for t in tactics}
    for section in parser.sections():
        if not section.startswith("rule."):
            continue
        r = _Reader(parser, section)
        rule_id = section.split(".", 1)[1]
        tactic = r.str("tactic", _REQUIRED)
        if tactic not in known:
            raise r.error("tactic", f"rule {rule_id} references unknown tactic {tactic!r}")
        rules.append(AdaptationRule(rule_id, r.str("description", ""),
                                    r.str("attribute", _REQUIRED), tactic,
                                    r.int("priority", _REQUIRED)))
        r.check_unknown()
    try:
        validate_rules(rules, tactics)
    except ValueError as exc:
        raise ConfigError(f"[rule.*] {exc}") from None
    return tuple(rules)


def _parse_awareness(parser) -> dict:
    if not parser.has_section("awareness"):
        return {}
    r = _Reader(parser, "awareness")
    out = {}
    for key, conv in (("queue_factor", r.float), ("meta_period", r.int),
                      ("overhead_penalty", r.float), ("context_tolerance", r.float),
                      ("violation_threshold", r.float)):
        value = conv(key, None)
        if value is not None:
            out[key] = value
    if out.get("meta_period", 1) < 1:
        raise r.error("meta_period", "must be >= 1")
    if not 0 < out.get("violation_threshold", 0.9) <= 1:
        raise r.error("violation_threshold", "outside (0, 1]")
    r.check_unknown()
    return out


def parse_config_string(text: str, base_dir: Path | str = ".",
                        source: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(source or "<string>"))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for required in ("experiment", "datacenter", "workload"):
        if not parser.has_section(required):
            raise ConfigError(f"[{required}] section missing")

    r = _Reader(parser, "experiment")
    seed = r.int("seed", 0)
    duration = r.int("duration", None)
    if duration is not None and duration < 1:
        raise r.error("duration", "must be >= 1")
    output_dir = Path(r.str("output_dir", "results"))
    clock = r.str("overhead_clock", "model")
    if clock not in ("model", "wall"):
        raise r.error("overhead_clock", "must be model or wall")
    unit = r.float("overhead_unit", 1e-3)
    if unit <= 0:
        raise r.error("overhead_unit", "must be positive")
    monitoring = r.float("monitoring_interval", 864.0)
    if monitoring <= 0:
        raise r.error("monitoring_interval", "must be positive")
    r.check_unknown()

    base = Path(base_dir)
    spec, max_hosts, scale_type = _parse_host(parser)
    vm_types = _parse_vm_types(parser)
    deployments = _parse_deployments(parser, spec, max_hosts, vm_types)
    trace_path, trace, window, mix, deadline_factor, policy = _parse_workload(parser, base)
    goals = _parse_goals(parser)
    tactics = _parse_tactics(parser)
    rules = _parse_rules(parser, tactics)
    awareness = _parse_awareness(parser)

    if scale_type not in {t.name for t in vm_types}:
        raise ConfigError(f"[datacenter] scale_vm_type: unknown VM type {scale_type!r}")

    known_sections = ("experiment", "datacenter", "workload", "awareness")
    prefixes = ("vm_type.", "deployment.", "goal.", "tactic.", "rule.")
    for section in parser.sections():
        if section not in known_sections and not section.startswith(prefixes):
            raise ConfigError(f"[{section}] unknown section")

    return ExperimentConfig(
        seed=seed, duration=duration, output_dir=output_dir, overhead_clock=clock,
        overhead_unit=unit, monitoring_interval=monitoring, host_spec=spec,
        max_hosts=max_hosts, vm_types=vm_types, deployments=deployments,
        trace_path=trace_path, trace=trace, arrival_window=window, service_mix=mix,
        deadline_factor=deadline_factor, scheduling_policy=policy, scale_vm_type=scale_type,
        goals=goals, tactics=tactics, rules=rules, awareness=awareness, source=source)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_string(text, base_dir=path.parent, source=path)
