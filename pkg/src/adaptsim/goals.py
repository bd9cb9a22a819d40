"""QoS goals, violation checks and goal-satisfaction history."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

MINIMISE = "minimise"
MAXIMISE = "maximise"

RESPONSE_TIME = "response_time"
ENERGY = "energy"
COST = "cost"


class GoalConfigError(ValueError):
    pass


@dataclass
class QosGoal:
    goal_id: int
    name: str
    constraint_value: float
    metric: str
    objective: str = MINIMISE
    weight: float = 0.0
    attribute: str = RESPONSE_TIME
    # "interval": compare the window value; "run": compare the window value
    # extrapolated over the whole run (budgets such as total cost)
    scope: str = "interval"
    violated: bool = False


@dataclass
class RuntimeGoal(QosGoal):
    user_id: str | None = None
    violation_threshold: float = 0.9


@dataclass(frozen=True)
class ViolationStatus:
    goal_id: int
    attribute: str
    observed: float
    constraint: float
    violated: bool


@dataclass(frozen=True)
class GoalHistoryRecord:
    time_instance: float
    average_violation_value: float
    tactic_executed: str
    average_value_after_adaptation: float
    attribute: str = RESPONSE_TIME


def is_violated(objective: str, constraint: float, observed: float) -> bool:
    if objective == MINIMISE:
        return observed > constraint
    return observed < constraint


def check(goal: QosGoal, observed: float) -> ViolationStatus:
    """Compare one observation against the goal; equality is satisfied."""
    goal.violated = is_violated(goal.objective, goal.constraint_value, observed)
    return ViolationStatus(goal.goal_id, goal.attribute, observed,
                           goal.constraint_value, goal.violated)


def predict_violation(goal: RuntimeGoal, observed: float) -> bool:
    """True when ``observed`` is past the proactive trip line but not yet violating.

    For a minimised goal the trip line is ``threshold * constraint``; for a
    maximised one it is ``constraint / threshold``.
    """
    c = goal.constraint_value
    if goal.objective == MINIMISE:
        return c * goal.violation_threshold < observed <= c
    return c <= observed < c / goal.violation_threshold


def satisfaction(goal: QosGoal, observed: float | None) -> float:
    """Normalised satisfaction in [0, 1]; 1 when the goal holds or nothing was observed."""
    if observed is None or not is_violated(goal.objective, goal.constraint_value, observed):
        return 1.0
    if goal.objective == MINIMISE:
        return goal.constraint_value / observed if observed > 0 else 1.0
    return max(0.0, observed / goal.constraint_value) if goal.constraint_value > 0 else 0.0


@dataclass
class GoalsModel:
    goals: list = field(default_factory=list)
    history: list = field(default_factory=list)

    def __post_init__(self):
        ids = [g.goal_id for g in self.goals]
        if len(ids) != len(set(ids)):
            raise GoalConfigError("duplicate goal_id")

    def by_attribute(self, attribute: str) -> QosGoal | None:
        for goal in self.goals:
            if goal.attribute == attribute:
                return goal
        return None

    @property
    def weights(self) -> dict[str, float]:
        return {g.attribute: g.weight for g in self.goals}

    def record_goal_history(self, record: GoalHistoryRecord) -> None:
        if self.history and record.time_instance < self.history[-1].time_instance:
            raise ValueError(
                f"history record at {record.time_instance} precedes "
                f"{self.history[-1].time_instance}")
        self.history.append(record)

    def query(self, tactic: str | None = None, start: float | None = None,
              end: float | None = None, attribute: str | None = None) -> list[GoalHistoryRecord]:
        out = []
        for rec in self.history:
            if tactic is not None and rec.tactic_executed != tactic:
                continue
            if attribute is not None and rec.attribute != attribute:
                continue
            if start is not None and rec.time_instance < start:
                continue
            if end is not None and rec.time_instance > end:
                continue
            out.append(rec)
        return out

    def as_runtime(self, violation_threshold: float = 0.9) -> "GoalsModel":
        """Copy with every goal promoted to a :class:`RuntimeGoal`."""
        goals = []
        for g in self.goals:
            if isinstance(g, RuntimeGoal):
                goals.append(replace(g))
            else:
                goals.append(RuntimeGoal(**vars(g), violation_threshold=violation_threshold))
        return GoalsModel(goals=goals, history=list(self.history))


_REQUIRED = ("goal_id", "name", "constraint_value", "metric", "objective", "weight")


def load_goals(entries: Iterable[Mapping]) -> GoalsModel:
    """Build a goals model from mappings with the fields of :class:`QosGoal`.

    Entries carrying ``violation_threshold`` or ``user_id`` become runtime goals.
    """
    goals = []
    seen = set()
    for entry in entries:
        label = entry.get("name", entry.get("goal_id", "?"))
        missing = [k for k in _REQUIRED if entry.get(k) in (None, "")]
        if missing:
            raise GoalConfigError(f"goal {label}: missing {', '.join(missing)}")
        gid = int(entry["goal_id"])
        if gid in seen:
            raise GoalConfigError(f"goal {label}: duplicate goal_id {gid}")
        seen.add(gid)
        weight = float(entry["weight"])
        if not 0.0 <= weight <= 1.0:
            raise GoalConfigError(f"goal {label}: weight {weight} outside [0, 1]")
        objective = str(entry["objective"]).lower()
        if objective not in (MINIMISE, MAXIMISE):
            raise GoalConfigError(f"goal {label}: objective must be minimise or maximise")
        scope = entry.get("scope", "interval")
        if scope not in ("interval", "run"):
            raise GoalConfigError(f"goal {label}: scope must be interval or run")
        kwargs = dict(goal_id=gid, name=str(entry["name"]),
                      constraint_value=float(entry["constraint_value"]),
                      metric=str(entry["metric"]), objective=objective, weight=weight,
                      attribute=str(entry.get("attribute", RESPONSE_TIME)), scope=scope)
        if "violation_threshold" in entry or "user_id" in entry:
            threshold = float(entry.get("violation_threshold", 0.9))
            if not 0.0 < threshold <= 1.0:
                raise GoalConfigError(f"goal {label}: violation_threshold outside (0, 1]")
            goals.append(RuntimeGoal(**kwargs, user_id=entry.get("user_id"),
                                     violation_threshold=threshold))
        else:
            goals.append(QosGoal(**kwargs))
    if not goals:
        raise GoalConfigError("at least one goal is required")
    total = math.fsum(g.weight for g in goals)
    if total > 1.0 + 1e-9:
        raise GoalConfigError(f"goal weights sum to {total:g} (> 1); last goal {goals[-1].name}")
    return GoalsModel(goals=goals)


DEFAULT_GOALS = (
    dict(goal_id=1, name="Response time", constraint_value=25.0, metric="ms",
         objective=MINIMISE, weight=0.5, attribute=RESPONSE_TIME, scope="interval"),
    dict(goal_id=2, name="Greenability", constraint_value=25.0, metric="kWh",
         objective=MINIMISE, weight=0.2, attribute=ENERGY, scope="run"),
    dict(goal_id=3, name="Operational cost", constraint_value=50.0, metric="$",
         objective=MINIMISE, weight=0.2, attribute=COST, scope="run"),
)


def default_goals(runtime: bool = False, violation_threshold: float = 0.9) -> GoalsModel:
    entries = [dict(e) for e in DEFAULT_GOALS]
    if runtime:
        for e in entries:
            e["violation_threshold"] = violation_threshold
    return load_goals(entries)
