"""Self-awareness levels, self-expression and the architecture evaluator.

Decision paths:

``stimulus``
    detect violations and pick a tactic by rule priority; the step is 2 when
    the peak queue of the window exceeds ``queue_factor`` times the running
    vCPU capacity.
``goal``
    the stimulus path, plus proactive scaling when a runtime goal crosses
    its violation threshold without being violated yet.
``time``
    the stimulus path with candidates re-ranked by the mean relative
    improvement each tactic achieved under similar load.
``meta``
    every ``meta_period`` ticks, picks which of the three paths drives
    decisions by weighted goal satisfaction minus an overhead penalty.

Every path hands its decision to the same executor as the self-adaptive
controller, so tactic limits are enforced identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .adaptation import (AdaptationDecision, AdaptationEngine, AdaptationRule, Controller,
                         MonitorSample, detect, primary_violation)
from .goals import (MINIMISE, GoalHistoryRecord, GoalsModel, RuntimeGoal, predict_violation,
                    satisfaction)

STIMULUS = "stimulus"
GOAL = "goal"
TIME = "time"
INTERACTION = "interaction"
META = "meta"
LEVELS = (STIMULUS, GOAL, TIME, INTERACTION, META)
DECISION_PATHS = (STIMULUS, GOAL, TIME)

MODE_LEVELS = {
    "stimulus-aware": frozenset({STIMULUS}),
    "goal-aware": frozenset({STIMULUS, GOAL}),
    "time-aware": frozenset({STIMULUS, TIME}),
    "meta-aware": frozenset({STIMULUS, GOAL, TIME, META}),
}


class AwarenessConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AwarenessConfig:
    levels: frozenset
    mode: str = "custom"
    queue_factor: float = 2.0
    meta_period: int = 5
    overhead_penalty: float = 0.1
    context_tolerance: float = 0.25

    def __post_init__(self):
        unknown = set(self.levels) - set(LEVELS)
        if unknown:
            raise AwarenessConfigError(f"unknown awareness levels {sorted(unknown)}")
        if self.levels and STIMULUS not in self.levels:
            raise AwarenessConfigError("stimulus awareness is required by every other level")
        if self.meta_period < 1:
            raise AwarenessConfigError("meta_period must be >= 1")

    @classmethod
    def for_mode(cls, mode: str, **tunables) -> "AwarenessConfig":
        if mode not in MODE_LEVELS:
            raise AwarenessConfigError(f"{mode!r} is not a self-aware mode")
        return cls(levels=MODE_LEVELS[mode], mode=mode, **tunables)

    @property
    def initial_path(self) -> str:
        if META in self.levels:
            return STIMULUS
        if GOAL in self.levels:
            return GOAL
        if TIME in self.levels:
            return TIME
        return STIMULUS


@dataclass(frozen=True)
class TacticOutcomeRecord:
    tactic_id: str
    attribute: str
    value_before: float
    value_after: float
    time_instance: int
    load: int
    improvement: float


@dataclass(frozen=True)
class TacticScore:
    tactic_id: str
    mean_improvement: float
    samples: int


def relative_improvement(objective: str, before: float, after: float) -> float:
    """Signed fractional improvement; worsening gives a negative value."""
    if before == 0:
        return 0.0
    if objective == MINIMISE:
        return (before - after) / before
    return (after - before) / before


def stimulus_step(sample: MonitorSample, queue_factor: float = 2.0) -> int:
    return 2 if sample.max_queue_depth > queue_factor * sample.running_capacity else 1


def stimulus_act(sample: MonitorSample, goals: GoalsModel, engine: AdaptationEngine, *,
                 queue_factor: float = 2.0, decided_by: str = "stimulus-aware"):
    """Reactive decision for the heaviest violated goal, or ``None``.

    Returns ``(decision, violations, rules_examined)``.
    """
    violations = detect(sample, goals)
    engine.note_outcome(sample.time_instance, {v.attribute for v in violations})
    if not violations:
        return None, violations, 0
    decision, examined = engine.select_tactic(
        violations, goals, now=sample.time, time_instance=sample.time_instance,
        decided_by=decided_by, magnitude=stimulus_step(sample, queue_factor),
        load=sample.requests_arrived)
    return decision, violations, examined


def predicted_goals(sample: MonitorSample, goals: GoalsModel) -> list[RuntimeGoal]:
    out = []
    for goal in goals.goals:
        if not isinstance(goal, RuntimeGoal):
            continue
        observed = sample.observed(goal)
        if observed is not None and predict_violation(goal, observed):
            out.append(goal)
    return out


def goal_act(sample: MonitorSample, goals: GoalsModel, engine: AdaptationEngine, *,
             queue_factor: float = 2.0, decided_by: str = "goal-aware"):
    """Stimulus decision first; otherwise a proactive scaling decision.

    Returns ``(decision, violations, predicted, rules_examined)``.
    """
    decision, violations, examined = stimulus_act(sample, goals, engine,
                                                  queue_factor=queue_factor,
                                                  decided_by=decided_by)
    predicted = predicted_goals(sample, goals)
    if violations:
        return decision, violations, predicted, examined
    if not predicted:
        return None, violations, predicted, examined
    order = {g.goal_id: i for i, g in enumerate(goals.goals)}
    target = min(predicted, key=lambda g: (-g.weight, order[g.goal_id]))
    ranked, more = engine.candidates(target.attribute, scaling_only=True)
    examined += more
    if not ranked:
        return None, violations, predicted, examined
    decision = engine.decide(ranked[0], None, attribute=target.attribute, magnitude=1,
                             now=sample.time, time_instance=sample.time_instance,
                             decided_by=decided_by, proactive=True,
                             value_before=sample.observed(target),
                             load=sample.requests_arrived)
    return decision, violations, predicted, examined


def score_tactics(history: Sequence[TacticOutcomeRecord], attribute: str, load: int,
                  tolerance: float = 0.25) -> dict[str, TacticScore]:
    """Mean improvement per tactic over records whose load is within ``tolerance`` of ``load``."""
    lo, hi = load * (1 - tolerance), load * (1 + tolerance)
    sums: dict[str, list] = {}
    for rec in history:
        if rec.attribute != attribute or not lo <= rec.load <= hi:
            continue
        sums.setdefault(rec.tactic_id, []).append(rec.improvement)
    return {t: TacticScore(t, math.fsum(v) / len(v), len(v)) for t, v in sums.items()}


def time_act(candidates: Sequence[AdaptationRule], history: Sequence[TacticOutcomeRecord],
             attribute: str, load: int, tolerance: float = 0.25) -> AdaptationRule:
    """Highest-scoring candidate; unseen tactics score 0; ties keep rule priority."""
    if not candidates:
        raise ValueError("time_act needs at least one candidate")
    scores = score_tactics(history, attribute, load, tolerance)

    def score(rule):
        s = scores.get(rule.tactic_id)
        return s.mean_improvement if s is not None else 0.0

    return max(enumerate(candidates), key=lambda ir: (score(ir[1]), -ir[0]))[1]


def time_aware_act(sample: MonitorSample, goals: GoalsModel, engine: AdaptationEngine,
                   history: Sequence[TacticOutcomeRecord], *, queue_factor: float = 2.0,
                   tolerance: float = 0.25, decided_by: str = "time-aware"):
    """Stimulus detection with history-ranked tactic choice.

    Returns ``(decision, violations, rules_examined + records_scanned)``.
    """
    violations = detect(sample, goals)
    engine.note_outcome(sample.time_instance, {v.attribute for v in violations})
    if not violations:
        return None, violations, 0
    primary = primary_violation(violations, goals)
    ranked, examined = engine.candidates(primary.attribute)
    if not ranked:
        return None, violations, examined
    rule = time_act(ranked, history, primary.attribute, sample.requests_arrived, tolerance)
    decision = engine.decide(rule, primary, attribute=primary.attribute,
                             magnitude=stimulus_step(sample, queue_factor), now=sample.time,
                             time_instance=sample.time_instance, decided_by=decided_by,
                             load=sample.requests_arrived)
    return decision, violations, examined + len(history)


@dataclass
class LevelStats:
    """Goal satisfaction and overhead observed while one decision path was active."""

    ticks: int = 0
    satisfaction: dict = field(default_factory=dict)  # attribute -> summed satisfaction
    overhead: float = 0.0

    def add(self, per_goal: Mapping[str, float], overhead: float) -> None:
        self.ticks += 1
        for attr, value in per_goal.items():
            self.satisfaction[attr] = self.satisfaction.get(attr, 0.0) + value
        self.overhead += overhead

    def mean_satisfaction(self, attribute: str) -> float:
        if self.ticks == 0:
            return 1.0
        return self.satisfaction.get(attribute, float(self.ticks)) / self.ticks

    @property
    def mean_overhead(self) -> float:
        return self.overhead / self.ticks if self.ticks else 0.0


def level_scores(stats: Mapping[str, LevelStats], weights: Mapping[str, float],
                 overhead_penalty: float = 0.1) -> dict[str, float]:
    total_w = math.fsum(weights.values())
    max_oh = max((s.mean_overhead for s in stats.values()), default=0.0)
    scores = {}
    for level, s in stats.items():
        if total_w > 0:
            benefit = math.fsum(w * s.mean_satisfaction(a) for a, w in weights.items()) / total_w
        else:
            benefit = 1.0
        cost = s.mean_overhead / max_oh if max_oh > 0 else 0.0
        scores[level] = benefit - overhead_penalty * cost
    return scores


def meta_act(stats: Mapping[str, LevelStats], weights: Mapping[str, float], current: str,
             overhead_penalty: float = 0.1) -> str:
    """Level with the best score; the current level is kept on (near-)ties."""
    scores = level_scores(stats, weights, overhead_penalty)
    if not scores:
        return current
    best = max(scores.values())
    if current in scores and math.isclose(scores[current], best, rel_tol=1e-9, abs_tol=1e-12):
        return current
    for level in DECISION_PATHS:
        if level in scores and math.isclose(scores[level], best, rel_tol=1e-9, abs_tol=1e-12):
            return level
    return max(scores, key=scores.get)


def evaluate_after(decision: AdaptationDecision, sample: MonitorSample,
                   goals: GoalsModel) -> TacticOutcomeRecord | None:
    """Outcome of ``decision`` measured on the sample one tick later."""
    attribute = decision.trigger[0]
    goal = goals.by_attribute(attribute)
    if goal is None or decision.value_before is None:
        return None
    after = sample.observed(goal)
    if after is None:
        return None
    return TacticOutcomeRecord(
        tactic_id=decision.tactic_id, attribute=attribute, value_before=decision.value_before,
        value_after=after, time_instance=decision.time_instance, load=decision.load,
        improvement=relative_improvement(goal.objective, decision.value_before, after))


def interaction_act(*args, **kwargs) -> None:
    """Placeholder for cross-node (federated) awareness; never decides."""
    return None


class SelfAwareController(Controller):
    """QoS monitoring, the enabled awareness levels and self-expression."""

    def __init__(self, monitor, goals: GoalsModel, engine: AdaptationEngine, ledger,
                 config: AwarenessConfig):
        super().__init__(monitor, goals, engine, ledger)
        self.config = config
        self.mode = config.mode
        self.path = config.initial_path
        self.outcomes: list[TacticOutcomeRecord] = []
        self.path_log: list[tuple] = []  # (time_instance, path)
        self.level_stats: dict[str, LevelStats] = {}
        self._window: dict[str, LevelStats] = {}
        self._ticks = 0
        self._tick_overhead_mark = 0.0
        self._pending: AdaptationDecision | None = None

    def monitor_tick(self, now, time_instance):
        t0 = self.ledger.start()
        sample = self.monitor.collect(now, time_instance)
        sensed = self._sense(sample)
        self.ledger.charge("monitoring", t0, 1 + sample.throughput + sensed)
        self.samples.append(sample)
        return sample

    def _sense(self, sample: MonitorSample) -> int:
        """Internal sensors: per-VM and per-host utilisation of the managed system."""
        dc = self.monitor.dc
        sample.sensors["vm"] = {vm.id: vm.busy_vcpus / vm.vm_type.vcpus
                                for vm in dc.vms.values()}
        sample.sensors["host"] = {h.id: h.utilization for h in dc.hosts if h.powered_on}
        return len(sample.sensors["vm"]) + len(sample.sensors["host"])

    def evaluate(self, sample: MonitorSample) -> None:
        decision, self._pending = self._pending, None
        if decision is None or decision.time_instance != sample.time_instance - 1:
            return
        t0 = self.ledger.start()
        record = evaluate_after(decision, sample, self.goals)
        if record is not None:
            self.outcomes.append(record)
            self.goals.record_goal_history(GoalHistoryRecord(
                time_instance=decision.decided_at,
                average_violation_value=record.value_before,
                tactic_executed=record.tactic_id,
                average_value_after_adaptation=record.value_after,
                attribute=record.attribute))
        self.ledger.charge("monitoring", t0, 1 + len(self.outcomes))

    def _account_tick(self, sample: MonitorSample) -> None:
        per_goal = {g.attribute: satisfaction(g, sample.observed(g)) for g in self.goals.goals}
        spent = self.ledger.total - self._tick_overhead_mark
        self._tick_overhead_mark = self.ledger.total
        self._window.setdefault(self.path, LevelStats()).add(per_goal, spent)

    def _meta(self, sample: MonitorSample) -> None:
        t0 = self.ledger.start()
        for level, stats in self._window.items():
            self.level_stats[level] = stats  # most recent window per level
        self._window = {}
        candidates = [p for p in DECISION_PATHS if p in self.config.levels]
        untried = [p for p in candidates if p not in self.level_stats]
        if untried:
            chosen = untried[0]
        else:
            chosen = meta_act({p: self.level_stats[p] for p in candidates},
                              {g.attribute: g.weight for g in self.goals.goals},
                              self.path, self.config.overhead_penalty)
        if chosen != self.path:
            self.path = chosen
        self.path_log.append((sample.time_instance, self.path))
        self.ledger.charge("deciding", t0, 1 + len(candidates))

    def decide(self, sample: MonitorSample) -> AdaptationDecision | None:
        if self._ticks:
            self._account_tick(sample)
        else:
            self._tick_overhead_mark = self.ledger.total
        self._ticks += 1
        if META in self.config.levels and self._ticks % self.config.meta_period == 0:
            self._meta(sample)

        cfg = self.config
        t0 = self.ledger.start()
        predictions = 0
        if self.path == GOAL and GOAL in cfg.levels:
            decision, violations, predicted, examined = goal_act(
                sample, self.goals, self.engine, queue_factor=cfg.queue_factor,
                decided_by=self.mode)
            predictions = len(self.goals.goals)
        elif self.path == TIME and TIME in cfg.levels:
            decision, violations, examined = time_aware_act(
                sample, self.goals, self.engine, self.outcomes, queue_factor=cfg.queue_factor,
                tolerance=cfg.context_tolerance, decided_by=self.mode)
        else:
            decision, violations, examined = stimulus_act(
                sample, self.goals, self.engine, queue_factor=cfg.queue_factor,
                decided_by=self.mode)
        if INTERACTION in cfg.levels:
            interaction_act(sample)
        units = {"detecting": 1 + len(self.goals.goals) + predictions}
        if violations or decision is not None:
            # queue and capacity inspection for step sizing, then rule scan
            units["deciding"] = 2 + examined
        self.ledger.charge_split(t0, units)
        if decision is not None:
            self.decisions.append(decision)
            self._pending = decision
        return decision
