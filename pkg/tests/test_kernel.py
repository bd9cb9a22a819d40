from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from adaptsim.kernel import (MONITOR_TICK, REQUEST_ARRIVAL, REQUEST_COMPLETION, SchedulingError,
                            SimEvent, Simulator)


def _recorder(sim, kinds=(REQUEST_ARRIVAL, REQUEST_COMPLETION, MONITOR_TICK)):
    seen = []
    for kind in kinds:
        sim.on(kind, lambda ev, seen=seen: seen.append((sim.now, ev.payload)))
    return seen


def test_simultaneous_events_fire_in_insertion_order():
    sim = Simulator()
    seen = _recorder(sim)
    for label in "abc":
        sim.at(5.0, REQUEST_ARRIVAL, label)
    sim.at(1.0, MONITOR_TICK, "first")
    sim.run()
    assert seen == [(1.0, "first"), (5.0, "a"), (5.0, "b"), (5.0, "c")]


def test_scheduling_in_the_past_is_refused():
    sim = Simulator()
    sim.at(3.0, MONITOR_TICK)
    sim.run()
    with pytest.raises(SchedulingError):
        sim.at(2.0, MONITOR_TICK)


def test_run_until_stops_inclusively_and_parks_clock():
    sim = Simulator()
    seen = _recorder(sim)
    sim.at(2.0, MONITOR_TICK, 1)
    sim.at(4.0, MONITOR_TICK, 2)
    sim.at(4.5, MONITOR_TICK, 3)
    assert sim.run_until(4.0) == 2
    assert sim.now == 4.0 and sim.pending_count == 1
    assert [p for _, p in seen] == [1, 2]
    with pytest.raises(SchedulingError):
        sim.run_until(3.0)


def test_unknown_event_kind_rejected():
    with pytest.raises(ValueError):
        Simulator().on("bogus", print)


def test_handlers_may_schedule_at_current_time():
    sim = Simulator(keep_log=True)
    sim.on(MONITOR_TICK, lambda ev: sim.at(sim.now, REQUEST_ARRIVAL, "follow-up"))
    sim.on(REQUEST_ARRIVAL, lambda ev: None)
    sim.at(1.0, MONITOR_TICK)
    sim.run()
    assert [k for _, _, k in sim.log] == [MONITOR_TICK, REQUEST_ARRIVAL]
    assert sim.scheduled_count == 2


@given(st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), max_size=60))
def test_dispatch_order_is_time_then_sequence(times):
    sim = Simulator(keep_log=True)
    sim.on(REQUEST_ARRIVAL, lambda ev: None)
    for t in times:
        sim.schedule(SimEvent(t, REQUEST_ARRIVAL))
    sim.run()
    keys = [(t, seq) for t, seq, _ in sim.log]
    assert keys == sorted(keys)
    assert len(keys) == len(times)
