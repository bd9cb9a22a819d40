"""Reactive self-adaptation: monitor, detector, rule-based engine and executor.

One controller tick runs ``monitor -> detect -> select -> execute``.  At most
one tactic is executed per tick, chosen for the violated attribute with the
largest goal weight.  If an attribute is still violated on the tick after a
tactic ran for it, that tactic is flagged ineffective for the attribute and
selection moves down the rule priorities; flags clear once the attribute is
satisfied again.  When every feasible candidate is flagged, the
lowest-priority feasible one is used again.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from . import broker as brk
from .cloud import CapacityExhausted, Datacenter, Host, VmType
from .goals import (COST, ENERGY, RESPONSE_TIME, GoalsModel, QosGoal, ViolationStatus,
                    check)
from .metrics import OverheadLedger, mean

log = logging.getLogger(__name__)

# executor actions
SCALE_VMS = "scale_vms"
SCALE_HOSTS = "scale_hosts"
CONSOLIDATE = "consolidate"
SCHEDULE = "schedule"
CONCURRENCY = "concurrency"
SCALING_ACTIONS = (SCALE_VMS, SCALE_HOSTS)


@dataclass
class MonitorSample:
    time_instance: int
    time: float
    window: tuple
    avg_response_time: float | None
    throughput: int
    energy_kwh_interval: float
    cost_interval: float
    per_service: dict = field(default_factory=dict)
    requests_arrived: int = 0
    max_queue_depth: int = 0
    running_capacity: int = 0
    vm_count: int = 0
    host_count: int = 0
    projection: float = 1.0  # run length / window length
    sensors: dict = field(default_factory=dict)

    def observed(self, goal: QosGoal) -> float | None:
        if goal.attribute == RESPONSE_TIME:
            return self.avg_response_time
        if goal.attribute == ENERGY:
            value = self.energy_kwh_interval
        elif goal.attribute == COST:
            value = self.cost_interval
        else:
            raise KeyError(f"no monitored value for {goal.attribute!r}")
        return value * self.projection if goal.scope == "run" else value


@dataclass(frozen=True)
class AdaptationTactic:
    tactic_id: str
    description: str
    affected_object: str  # host | vm | scheduler
    change: str  # increase | decrease | reconfigure
    action: str
    min_limit: float | None = None
    max_limit: float | None = None
    variations: tuple = ()

    @property
    def is_scaling(self) -> bool:
        return self.action in SCALING_ACTIONS


@dataclass(frozen=True)
class AdaptationRule:
    rule_id: str
    description: str
    quality_attribute: str
    tactic_id: str
    priority: int


@dataclass
class AdaptationDecision:
    tactic_id: str
    magnitude: int
    trigger: tuple
    decided_at: float
    decided_by: str
    time_instance: int = 0
    proactive: bool = False
    value_before: float | None = None
    load: int = 0


@dataclass
class ExecutionReport:
    decision: AdaptationDecision
    status: str  # executed | aborted
    hosts_before: int
    hosts_after: int
    vms_before: int
    vms_after: int
    policy_before: str
    policy_after: str
    units_applied: int = 0
    touched: int = 0
    detail: str = ""


SCHEDULING_VARIATIONS = (brk.EDF, brk.LST, brk.SINGLE_QUEUE, brk.MULTI_QUEUE,
                         brk.MULTI_DYNAMIC_QUEUE)

DEFAULT_TACTICS = (
    AdaptationTactic("vertical-scaling", "increase the number of VMs", "vm", "increase",
                     SCALE_VMS, min_limit=1, max_limit=None, variations=(1, 2, 3)),
    AdaptationTactic("vertical-descaling", "decrease the number of VMs", "vm", "decrease",
                     SCALE_VMS, min_limit=1, max_limit=None, variations=(1, 2, 3)),
    AdaptationTactic("horizontal-scaling", "increase the number of running hosts", "host",
                     "increase", SCALE_HOSTS, min_limit=1, max_limit=None, variations=(1, 2, 3)),
    AdaptationTactic("horizontal-descaling", "decrease the number of running hosts", "host",
                     "decrease", SCALE_HOSTS, min_limit=1, max_limit=None, variations=(1, 2, 3)),
    AdaptationTactic("vm-consolidation",
                     "shut down hosts running fewest VMs after migrating their VMs",
                     "host", "decrease", CONSOLIDATE, min_limit=1, max_limit=None,
                     variations=(1, 2, 3)),
    AdaptationTactic("concurrency", "process request streams on per-VM queues", "scheduler",
                     "reconfigure", CONCURRENCY, variations=(brk.SINGLE_QUEUE, brk.MULTI_QUEUE)),
    AdaptationTactic("dynamic-scheduling", "switch the scheduling policy", "scheduler",
                     "reconfigure", SCHEDULE, variations=SCHEDULING_VARIATIONS),
)

DEFAULT_RULES = (
    AdaptationRule("R1", "reschedule on slow responses", RESPONSE_TIME, "dynamic-scheduling", 1),
    AdaptationRule("R2", "add concurrency on slow responses", RESPONSE_TIME, "concurrency", 2),
    AdaptationRule("R3", "add VMs on slow responses", RESPONSE_TIME, "vertical-scaling", 3),
    AdaptationRule("R4", "add hosts on slow responses", RESPONSE_TIME, "horizontal-scaling", 4),
    AdaptationRule("R5", "consolidate on cost", COST, "vm-consolidation", 1),
    AdaptationRule("R6", "remove VMs on cost", COST, "vertical-descaling", 2),
    AdaptationRule("R7", "remove hosts on cost", COST, "horizontal-descaling", 3),
    AdaptationRule("R8", "consolidate on energy", ENERGY, "vm-consolidation", 1),
    AdaptationRule("R9", "remove VMs on energy", ENERGY, "vertical-descaling", 2),
    AdaptationRule("R10", "remove hosts on energy", ENERGY, "horizontal-descaling", 3),
)


def validate_rules(rules: Sequence[AdaptationRule], tactics: Sequence[AdaptationTactic]) -> None:
    known = {t.tactic_id for t in tactics}
    seen = set()
    for rule in rules:
        if rule.tactic_id not in known:
            raise ValueError(f"rule {rule.rule_id}: unknown tactic {rule.tactic_id!r}")
        if rule.priority < 1:
            raise ValueError(f"rule {rule.rule_id}: priority must be a positive integer")
        key = (rule.quality_attribute, rule.priority)
        if key in seen:
            raise ValueError(f"rule {rule.rule_id}: duplicate priority {rule.priority} "
                             f"for {rule.quality_attribute}")
        seen.add(key)


class Monitor:
    """Aggregates the response records and resource deltas of one window."""

    def __init__(self, broker: brk.Broker, datacenter: Datacenter, run_length: float):
        self.broker = broker
        self.dc = datacenter
        self.run_length = run_length
        self._cursor = 0
        self._last_time = 0.0
        self._last_energy = 0.0
        self._last_cost = 0.0
        self._last_arrivals = 0

    def collect(self, now: float, time_instance: int) -> MonitorSample:
        self.dc.advance(now)
        self.dc.settle()
        records = self.broker.records[self._cursor:]
        self._cursor = len(self.broker.records)
        energy, cost = self.dc.total_energy, self.dc.total_cost
        by_service: dict[int, list] = {}
        for rec in records:
            by_service.setdefault(rec.service_type_id, []).append(rec.response_time)
        window = (self._last_time, now)
        length = now - self._last_time
        sample = MonitorSample(
            time_instance=time_instance,
            time=now,
            window=window,
            avg_response_time=mean([r.response_time for r in records]),
            throughput=len(records),
            energy_kwh_interval=energy - self._last_energy,
            cost_interval=cost - self._last_cost,
            per_service={s: mean(v) for s, v in sorted(by_service.items())},
            requests_arrived=self.broker.arrivals - self._last_arrivals,
            max_queue_depth=self.broker.reset_peak_queue(),
            running_capacity=self.dc.total_vcpus,
            vm_count=self.dc.vm_count,
            host_count=self.dc.powered_count,
            projection=self.run_length / length if length > 0 else 1.0,
        )
        self._last_time, self._last_energy, self._last_cost = now, energy, cost
        self._last_arrivals = self.broker.arrivals
        return sample


def detect(sample: MonitorSample, goals: GoalsModel) -> list[ViolationStatus]:
    """Check every goal that has data in ``sample``; return the violated ones."""
    violations = []
    for goal in goals.goals:
        observed = sample.observed(goal)
        if observed is None:
            continue
        status = check(goal, observed)
        if status.violated:
            violations.append(status)
    return violations


def primary_violation(violations: Sequence[ViolationStatus], goals: GoalsModel) -> ViolationStatus:
    """Violation of the goal with the largest weight; earlier goals win ties."""
    order = {g.goal_id: i for i, g in enumerate(goals.goals)}
    weight = {g.goal_id: g.weight for g in goals.goals}
    return min(violations, key=lambda v: (-weight[v.goal_id], order[v.goal_id]))


class Executor:
    """Applies tactics to the datacenter and broker within the tactic limits."""

    def __init__(self, datacenter: Datacenter, broker: brk.Broker, tactics,
                 scale_vm_type: VmType | str = "m4.xlarge"):
        self.dc = datacenter
        self.broker = broker
        self.tactics = {t.tactic_id: t for t in tactics}
        if isinstance(scale_vm_type, str):
            scale_vm_type = datacenter.vm_catalog[scale_vm_type]
        self.scale_vm_type = scale_vm_type

    # -- limits --------------------------------------------------------

    def _host_cap(self, tactic: AdaptationTactic) -> int:
        cap = self.dc.max_hosts
        if tactic.max_limit is not None:
            cap = min(cap, int(tactic.max_limit))
        return cap

    def _min(self, tactic: AdaptationTactic) -> int:
        return max(1, int(tactic.min_limit or 1))

    def next_policy(self, tactic: AdaptationTactic) -> str | None:
        current = self.broker.policy
        if tactic.action == CONCURRENCY:
            return None if self.broker.multi else brk.MULTI_QUEUE
        variations = list(tactic.variations)
        if current in variations:
            idx = variations.index(current) + 1
            return variations[idx] if idx < len(variations) else None
        return variations[0] if variations else None

    def feasible(self, tactic: AdaptationTactic | str) -> bool:
        if isinstance(tactic, str):
            tactic = self.tactics[tactic]
        dc = self.dc
        if tactic.action == SCALE_VMS:
            if tactic.change == "increase":
                if tactic.max_limit is not None and dc.vm_count + 1 > tactic.max_limit:
                    return False
                return (dc.first_fit(self.scale_vm_type) is not None
                        or dc.powered_count < dc.max_hosts)
            return (dc.vm_count - 1 >= self._min(tactic)
                    and self._removable_vm() is not None)
        if tactic.action == SCALE_HOSTS:
            if tactic.change == "increase":
                return dc.powered_count + 1 <= self._host_cap(tactic)
            return (dc.powered_count - 1 >= self._min(tactic)
                    and self._removable_host() is not None)
        if tactic.action == CONSOLIDATE:
            return dc.powered_count > self._min(tactic) and bool(self.consolidation_plan(1))
        if tactic.action in (SCHEDULE, CONCURRENCY):
            return self.next_policy(tactic) is not None
        raise ValueError(f"unknown tactic action {tactic.action!r}")

    def _removable_vm(self):
        for vm_id in sorted(self.dc.vms, reverse=True):
            vm = self.dc.vms[vm_id]
            if vm.idle:
                return vm
        return None

    def _removable_host(self) -> Host | None:
        best = None
        for host in self.dc.powered_hosts:
            if any(not vm.idle for vm in host.vms.values()):
                continue
            if self.dc.vm_count - len(host.vms) < 1:
                continue
            if best is None or (len(host.vms), -host.id) < (len(best.vms), -best.id):
                best = host
        return best

    def consolidation_plan(self, limit: int | None = None) -> list:
        """Hosts to empty (fewest VMs first) with the idle-VM migrations for each.

        Works on a shadow copy of free capacity; targets are chosen first-fit
        by host id among hosts that stay on.
        """
        hosts = {h.id: h for h in self.dc.powered_hosts}
        free = {hid: h.free_mips for hid, h in hosts.items()}
        resident = {hid: sorted(h.vms.values(), key=lambda v: v.id) for hid, h in hosts.items()}
        active = sorted(hosts)
        plan = []
        while len(active) > 1 and (limit is None or len(plan) < limit):
            emptied = None
            for hid in sorted(active, key=lambda h: (len(resident[h]), h)):
                vms = resident[hid]
                if any(not vm.idle for vm in vms):
                    continue
                trial = dict(free)
                moves = []
                for vm in vms:
                    need = vm.vm_type.mips
                    target = next((t for t in active if t != hid and trial[t] + 1e-6 >= need),
                                  None)
                    if target is None:
                        break
                    trial[target] -= need
                    moves.append((vm, target))
                else:
                    emptied = hid
                    free = trial
                    for vm, target in moves:
                        resident[target].append(vm)
                    resident[hid] = []
                    plan.append((hosts[hid], moves))
                    break
            if emptied is None:
                break
            active.remove(emptied)
        return plan

    # -- execution -----------------------------------------------------

    def execute(self, decision: AdaptationDecision) -> ExecutionReport:
        tactic = self.tactics[decision.tactic_id]
        dc, broker = self.dc, self.broker
        hosts_before, vms_before, policy_before = dc.powered_count, dc.vm_count, broker.policy
        report = ExecutionReport(decision, "aborted", hosts_before, hosts_before, vms_before,
                                 vms_before, policy_before, policy_before)
        if not self.feasible(tactic):
            report.detail = "stale decision: tactic limits no longer permit execution"
            log.debug("aborted %s at %s", tactic.tactic_id, decision.decided_at)
            return report
        applied, touched = 0, 0
        if tactic.action == SCALE_VMS and tactic.change == "increase":
            for _ in range(decision.magnitude):
                if not self.feasible(tactic):
                    break
                try:
                    dc.provision_vm(self.scale_vm_type)
                except CapacityExhausted:
                    break
                applied += 1
                touched += 1
        elif tactic.action == SCALE_VMS:
            for _ in range(decision.magnitude):
                if not self.feasible(tactic):
                    break
                dc.deprovision_vm(self._removable_vm())
                applied += 1
                touched += 1
        elif tactic.action == SCALE_HOSTS and tactic.change == "increase":
            for _ in range(decision.magnitude):
                if not self.feasible(tactic):
                    break
                host = dc.power_on_host()
                touched += 1
                while host.fits(self.scale_vm_type):
                    dc.provision_vm(self.scale_vm_type, host=host)
                    touched += 1
                applied += 1
        elif tactic.action == SCALE_HOSTS:
            for _ in range(decision.magnitude):
                if not self.feasible(tactic):
                    break
                host = self._removable_host()
                for vm in list(host.vms.values()):
                    dc.deprovision_vm(vm)
                    touched += 1
                dc.set_host_power(host, False)
                touched += 1
                applied += 1
        elif tactic.action == CONSOLIDATE:
            for host, moves in self.consolidation_plan():
                for vm, target in moves:
                    dc.migrate_vm(vm, dc.host(target))
                    touched += 1
                if dc.powered_count > self._min(tactic):
                    dc.set_host_power(host, False)
                    touched += 1
                    applied += 1
        else:
            broker.set_scheduling_policy(self.next_policy(tactic))
            applied, touched = 1, 1 + broker.queued_count
        report.status = "executed"
        report.units_applied = applied
        report.touched = touched
        report.hosts_after, report.vms_after = dc.powered_count, dc.vm_count
        report.policy_after = broker.policy
        return report


class AdaptationEngine:
    """Rule-based tactic selection with ineffective-tactic escalation."""

    def __init__(self, rules: Sequence[AdaptationRule], executor: Executor):
        validate_rules(rules, list(executor.tactics.values()))
        self.rules = sorted(rules, key=lambda r: (r.quality_attribute, r.priority))
        self.executor = executor
        self.ineffective: dict[str, set] = {}
        self.last_action: dict[str, tuple] = {}  # attribute -> (time_instance, tactic_id)

    def rules_for(self, attribute: str) -> list[AdaptationRule]:
        return [r for r in self.rules if r.quality_attribute == attribute]

    def note_outcome(self, time_instance: int, violated: set) -> None:
        """Flag tactics whose attribute is still violated one tick after they ran."""
        for attr, (when, tactic_id) in list(self.last_action.items()):
            if attr in violated and when == time_instance - 1:
                self.ineffective.setdefault(attr, set()).add(tactic_id)
        for attr in list(self.ineffective):
            if attr not in violated:
                del self.ineffective[attr]

    def candidates(self, attribute: str, scaling_only: bool = False) -> tuple[list, int]:
        """Feasible tactics for ``attribute`` in selection order, and rules examined."""
        flagged = self.ineffective.get(attribute, set())
        fresh, stale = [], []
        examined = 0
        for rule in self.rules_for(attribute):
            examined += 1
            tactic = self.executor.tactics[rule.tactic_id]
            if scaling_only and not tactic.is_scaling:
                continue
            if not self.executor.feasible(tactic):
                continue
            (stale if tactic.tactic_id in flagged else fresh).append(rule)
        if fresh:
            return fresh, examined
        return stale[-1:], examined

    def decide(self, rule: AdaptationRule, status: ViolationStatus | None, *, attribute: str,
               magnitude: int, now: float, time_instance: int, decided_by: str,
               proactive: bool = False, value_before=None, load: int = 0) -> AdaptationDecision:
        self.last_action[attribute] = (time_instance, rule.tactic_id)
        return AdaptationDecision(
            tactic_id=rule.tactic_id, magnitude=magnitude, trigger=(attribute,),
            decided_at=now, decided_by=decided_by, time_instance=time_instance,
            proactive=proactive,
            value_before=status.observed if status is not None else value_before, load=load)

    def select_tactic(self, violations: Sequence[ViolationStatus], goals: GoalsModel, *,
                      now: float, time_instance: int, decided_by: str = "self-adaptive",
                      magnitude: int = 1, load: int = 0) -> tuple[AdaptationDecision | None, int]:
        if not violations:
            raise ValueError("select_tactic needs at least one violation")
        primary = primary_violation(violations, goals)
        ranked, examined = self.candidates(primary.attribute)
        if not ranked:
            log.info("no feasible tactic for %s at %s", primary.attribute, now)
            return None, examined
        decision = self.decide(ranked[0], primary, attribute=primary.attribute,
                               magnitude=magnitude, now=now, time_instance=time_instance,
                               decided_by=decided_by, load=load)
        return decision, examined


class Controller:
    """Common surface the simulation drives once per monitoring tick."""

    mode = "controller"

    def __init__(self, monitor: Monitor, goals: GoalsModel, engine: AdaptationEngine,
                 ledger: OverheadLedger):
        self.monitor = monitor
        self.goals = goals
        self.engine = engine
        self.executor = engine.executor
        self.ledger = ledger
        self.decisions: list[AdaptationDecision] = []
        self.reports: list[ExecutionReport] = []
        self.samples: list[MonitorSample] = []

    def monitor_tick(self, now: float, time_instance: int) -> MonitorSample:
        t0 = self.ledger.start()
        sample = self.monitor.collect(now, time_instance)
        self.ledger.charge("monitoring", t0, 1 + sample.throughput)
        self.samples.append(sample)
        return sample

    def evaluate(self, sample: MonitorSample) -> None:
        """Hook run after monitoring and before deciding."""

    def decide(self, sample: MonitorSample) -> AdaptationDecision | None:
        raise NotImplementedError

    def execute(self, decision: AdaptationDecision) -> ExecutionReport:
        t0 = self.ledger.start()
        report = self.executor.execute(decision)
        self.ledger.charge("executing", t0, 1 + report.touched)
        self.reports.append(report)
        return report


class SelfAdaptiveController(Controller):
    mode = "self-adaptive"

    def decide(self, sample: MonitorSample) -> AdaptationDecision | None:
        t0 = self.ledger.start()
        violations = detect(sample, self.goals)
        self.engine.note_outcome(sample.time_instance, {v.attribute for v in violations})
        self.ledger.charge("detecting", t0, 1 + len(self.goals.goals))
        if not violations:
            return None
        t0 = self.ledger.start()
        decision, examined = self.engine.select_tactic(
            violations, self.goals, now=sample.time, time_instance=sample.time_instance,
            decided_by=self.mode, magnitude=1, load=sample.requests_arrived)
        self.ledger.charge("deciding", t0, 1 + examined)
        if decision is not None:
            self.decisions.append(decision)
        return decision


__all__ = [
    "AdaptationDecision", "AdaptationEngine", "AdaptationRule", "AdaptationTactic",
    "Controller", "ExecutionReport", "Executor", "Monitor", "MonitorSample",
    "DEFAULT_RULES", "DEFAULT_TACTICS", "SelfAdaptiveController", "detect",
    "primary_violation", "validate_rules",
]
