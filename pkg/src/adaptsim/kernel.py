"""Event list, clock and dispatch loop.

Every other component schedules callbacks against a :class:`Simulator`.
Events fire in ``(fire_time, sequence)`` order, so simultaneous events are
dispatched first-in first-out.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

REQUEST_ARRIVAL = "request-arrival"
REQUEST_COMPLETION = "request-completion"
MONITOR_TICK = "monitor-tick"
ADAPTATION_EXECUTE = "adaptation-execute"
INTERVAL_BOUNDARY = "interval-boundary"
EVALUATOR_TICK = "evaluator-tick"

EVENT_KINDS = (
    REQUEST_ARRIVAL,
    REQUEST_COMPLETION,
    MONITOR_TICK,
    ADAPTATION_EXECUTE,
    INTERVAL_BOUNDARY,
    EVALUATOR_TICK,
)


class SchedulingError(RuntimeError):
    """Raised when an event would fire before the current clock."""


@dataclass(slots=True)
class SimEvent:
    fire_time: float
    kind: str
    payload: Any = None
    sequence: int = -1


@dataclass(slots=True)
class SimClock:
    now: float = 0.0
    processed_events: int = 0


@dataclass
class Simulator:
    """Single-threaded discrete-event engine.

    Handlers are registered per event kind and receive the event itself.
    If ``keep_log`` is set, each dispatched event is appended to ``log`` as
    ``(fire_time, sequence, kind)``.
    """

    keep_log: bool = False
    clock: SimClock = field(default_factory=SimClock)
    log: list = field(default_factory=list)
    _queue: list = field(default_factory=list, repr=False)
    _handlers: dict = field(default_factory=dict, repr=False)
    _next_seq: int = 0

    @property
    def now(self) -> float:
        return self.clock.now

    @property
    def scheduled_count(self) -> int:
        return self._next_seq

    @property
    def pending_count(self) -> int:
        return len(self._queue)

    def on(self, kind: str, handler: Callable[[SimEvent], None]) -> None:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self._handlers[kind] = handler

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.fire_time < self.clock.now:
            raise SchedulingError(
                f"cannot schedule {event.kind} at t={event.fire_time} "
                f"(clock is at {self.clock.now})"
            )
        event.sequence = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._queue, (event.fire_time, event.sequence, event))
        return event

    def at(self, fire_time: float, kind: str, payload: Any = None) -> SimEvent:
        return self.schedule(SimEvent(fire_time, kind, payload))

    def peek_time(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def step(self) -> SimEvent:
        fire_time, _, event = heapq.heappop(self._queue)
        self.clock.now = fire_time
        self.clock.processed_events += 1
        if self.keep_log:
            self.log.append((fire_time, event.sequence, event.kind))
        handler = self._handlers.get(event.kind)
        if handler is not None:
            handler(event)
        return event

    def run_until(self, end: float) -> int:
        """Dispatch every event with ``fire_time <= end``; leave the clock at ``end``."""
        if end < self.clock.now:
            raise SchedulingError(f"run_until({end}) is behind the clock ({self.clock.now})")
        processed = 0
        queue = self._queue
        while queue and queue[0][0] <= end:
            self.step()
            processed += 1
        self.clock.now = end
        return processed

    def run(self) -> int:
        """Dispatch until the event list is empty."""
        processed = 0
        while self._queue:
            self.step()
            processed += 1
        return processed
