from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from adaptsim.goals import (ENERGY, MAXIMISE, MINIMISE, GoalConfigError, GoalHistoryRecord,
                            RuntimeGoal, check, load_goals, default_goals, predict_violation,
                            satisfaction)


def test_default_goal_table():
    model = default_goals()
    rows = [(g.name, g.weight, g.metric, g.constraint_value) for g in model.goals]
    assert rows == [("Response time", 0.5, "ms", 25.0), ("Greenability", 0.2, "kWh", 25.0),
                    ("Operational cost", 0.2, "$", 50.0)]
    assert all(g.objective == MINIMISE for g in model.goals)


def test_equality_is_satisfied():
    goal = default_goals().goals[0]
    assert not check(goal, 25.0).violated
    assert check(goal, 25.0000001).violated and goal.violated


def test_maximise_goals_flip_direction():
    g = RuntimeGoal(9, "throughput", 100.0, "req/s", MAXIMISE, 0.1, "throughput")
    assert check(g, 99.0).violated and not check(g, 100.0).violated
    assert predict_violation(g, 105.0) and not predict_violation(g, 120.0)


def test_prediction_window_for_minimised_goal():
    g = default_goals(runtime=True).goals[0]  # trip line 22.5
    assert not predict_violation(g, 22.5)
    assert predict_violation(g, 22.6)
    assert predict_violation(g, 25.0)
    assert not predict_violation(g, 25.1)


@given(st.floats(0.01, 1e4), st.floats(0.01, 1e4), st.floats(0.05, 1.0))
def test_prediction_and_violation_are_exclusive(constraint, observed, threshold):
    g = RuntimeGoal(1, "g", constraint, "ms", MINIMISE, 0.5, violation_threshold=threshold)
    assert not (predict_violation(g, observed) and check(g, observed).violated)


def test_satisfaction_bounds():
    g = default_goals().goals[0]
    assert satisfaction(g, None) == 1.0
    assert satisfaction(g, 10.0) == 1.0
    assert satisfaction(g, 50.0) == 0.5


def _entry(**kw):
    base = dict(goal_id=1, name="rt", constraint_value=25, metric="ms", objective="minimise",
                weight=0.5)
    base.update(kw)
    return base


@pytest.mark.parametrize("entries, match", [
    ([_entry(weight=None)], "missing weight"),
    ([_entry(), _entry(name="dup")], "duplicate"),
    ([_entry(weight=1.5)], "outside"),
    ([_entry(weight=0.7), _entry(goal_id=2, name="b", weight=0.6)], "sum"),
    ([_entry(objective="sideways")], "objective"),
    ([_entry(scope="forever")], "scope"),
    ([], "at least one"),
])
def test_goal_validation(entries, match):
    with pytest.raises(GoalConfigError, match=match):
        load_goals(entries)


def test_history_is_append_only_in_time():
    model = default_goals(runtime=True)
    model.record_goal_history(GoalHistoryRecord(10.0, 30.0, "concurrency", 20.0))
    model.record_goal_history(GoalHistoryRecord(20.0, 0.9, "vm-consolidation", 0.8, ENERGY))
    with pytest.raises(ValueError):
        model.record_goal_history(GoalHistoryRecord(5.0, 1, "x", 1))
    assert [r.tactic_executed for r in model.query(start=15.0)] == ["vm-consolidation"]
    assert len(model.query(tactic="concurrency", end=10.0)) == 1
    assert model.query(attribute=ENERGY)[0].average_value_after_adaptation == 0.8
