from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from adaptsim.adaptation import DEFAULT_RULES, AdaptationDecision
from adaptsim.awareness import (GOAL, STIMULUS, TIME, AwarenessConfig,
                                AwarenessConfigError, LevelStats, TacticOutcomeRecord,
                                evaluate_after, goal_act, interaction_act, level_scores,
                                meta_act, relative_improvement, score_tactics, stimulus_act,
                                stimulus_step, time_act)
from adaptsim.goals import COST, ENERGY, RESPONSE_TIME, default_goals
from test_adaptation import sample, setup

RT_RULES = [r for r in DEFAULT_RULES if r.quality_attribute == RESPONSE_TIME]


def outcome(tactic, improvement, load=100, attribute=RESPONSE_TIME):
    return TacticOutcomeRecord(tactic, attribute, 40.0, 40.0 * (1 - improvement), 1, load,
                               improvement)


def test_mode_levels_and_prerequisites():
    assert AwarenessConfig.for_mode("goal-aware").levels == {STIMULUS, GOAL}
    assert AwarenessConfig.for_mode("meta-aware").initial_path == STIMULUS
    assert AwarenessConfig.for_mode("time-aware").initial_path == TIME
    with pytest.raises(AwarenessConfigError, match="stimulus"):
        AwarenessConfig(levels=frozenset({GOAL}))
    with pytest.raises(AwarenessConfigError):
        AwarenessConfig.for_mode("self-adaptive")


def test_stimulus_step_grows_with_queue_pressure():
    assert stimulus_step(sample(max_queue_depth=10, running_capacity=10)) == 1
    assert stimulus_step(sample(max_queue_depth=21, running_capacity=10)) == 2


def test_goal_awareness_acts_before_violation():
    *_, engine = setup()
    goals = default_goals(runtime=True)
    s = sample(rt=24.0)  # past 22.5, not above 25
    d, violations, predicted, _ = goal_act(s, goals, engine)
    assert violations == [] and [g.attribute for g in predicted] == [RESPONSE_TIME]
    assert d.proactive and d.tactic_id == "vertical-scaling"  # first scaling rule
    d2, *_ = stimulus_act(s, goals, engine)
    assert d2 is None


def test_goal_awareness_defers_to_stimulus_on_violation():
    *_, engine = setup()
    d, violations, predicted, _ = goal_act(sample(rt=30.0), default_goals(runtime=True), engine)
    assert violations and not d.proactive and d.tactic_id == "dynamic-scheduling"


def test_relative_improvement_sign():
    assert relative_improvement("minimise", 40.0, 30.0) == 0.25
    assert relative_improvement("maximise", 40.0, 30.0) == -0.25
    assert relative_improvement("minimise", 0.0, 3.0) == 0.0


def test_history_scoring_uses_similar_load_only():
    history = [outcome("concurrency", 0.5, load=100), outcome("concurrency", -1.0, load=300),
               outcome("vertical-scaling", 0.2, load=110)]
    scores = score_tactics(history, RESPONSE_TIME, 100)
    assert scores["concurrency"].mean_improvement == 0.5
    assert scores["vertical-scaling"].samples == 1
    assert time_act(RT_RULES, history, RESPONSE_TIME, 100).tactic_id == "concurrency"
    # at load 300 only the bad record is similar, so an unseen tactic (score 0) wins
    assert time_act(RT_RULES, history, RESPONSE_TIME, 300).tactic_id == "dynamic-scheduling"
    assert time_act(RT_RULES, [], RESPONSE_TIME, 100) is RT_RULES[0]
    with pytest.raises(ValueError):
        time_act([], history, RESPONSE_TIME, 1)


def stats(sat, overhead, ticks=1):
    s = LevelStats()
    for _ in range(ticks):
        s.add(sat, overhead)
    return s


def test_meta_prefers_satisfaction_then_cheaper_level():
    weights = {RESPONSE_TIME: 0.5, ENERGY: 0.2, COST: 0.2}
    good = {RESPONSE_TIME: 1.0, ENERGY: 1.0, COST: 1.0}
    poor = {RESPONSE_TIME: 0.5, ENERGY: 1.0, COST: 1.0}
    assert meta_act({STIMULUS: stats(poor, 1.0), GOAL: stats(good, 2.0)}, weights,
                    STIMULUS) == GOAL
    # equal satisfaction: the cheaper level wins
    assert meta_act({STIMULUS: stats(good, 1.0), GOAL: stats(good, 2.0)}, weights,
                    GOAL) == STIMULUS
    # exact tie keeps the current level
    assert meta_act({STIMULUS: stats(good, 1.0), TIME: stats(good, 1.0)}, weights,
                    TIME) == TIME
    assert meta_act({}, weights, GOAL) == GOAL


@given(st.dictionaries(st.sampled_from([STIMULUS, GOAL, TIME]),
                       st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 10)),
                       min_size=1))
def test_meta_scores_bounded(data):
    weights = {RESPONSE_TIME: 0.5, ENERGY: 0.2}
    s = {lvl: stats({RESPONSE_TIME: a, ENERGY: b}, oh) for lvl, (a, b, oh) in data.items()}
    for v in level_scores(s, weights).values():
        assert -0.1 - 1e-12 <= v <= 1.0 + 1e-12


def test_evaluate_after_measures_improvement():
    goals = default_goals(runtime=True)
    d = AdaptationDecision("concurrency", 1, (RESPONSE_TIME,), 864.0, "x", 1,
                           value_before=40.0, load=300)
    rec = evaluate_after(d, sample(rt=30.0, tick=2), goals)
    assert rec.improvement == 0.25 and rec.load == 300
    assert evaluate_after(d, sample(rt=None, tick=2), goals) is None


def test_interaction_awareness_is_inert():
    assert interaction_act(sample(rt=99.0)) is None
