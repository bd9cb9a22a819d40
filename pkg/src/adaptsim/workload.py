"""Service types, trend ingestion and per-interval request generation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

INSTANCE_DURATION = 864.0  # one trend day compressed into 864 s
SCALE_CAP = 700
REFERENCE_MIPS = 2400.0


class TrendFormatError(ValueError):
    pass


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceType:
    id: int
    pattern: str  # browsing | bidding | mixed
    required_mi: float
    browsing_share: float  # fraction of requests drawn from the browsing pattern

    def __post_init__(self):
        if self.required_mi <= 0:
            raise ValueError(f"service {self.id}: required_mi must be positive")
        if not 0.0 <= self.browsing_share <= 1.0:
            raise ValueError(f"service {self.id}: browsing_share outside [0, 1]")


# RUBiS services mapped onto MI per request.
SERVICE_TYPES: dict[int, ServiceType] = {
    1: ServiceType(1, "browsing", 10000.0, 1.0),
    2: ServiceType(2, "bidding", 20000.0, 0.0),
    3: ServiceType(3, "mixed", 12000.0, 0.7),
    4: ServiceType(4, "mixed", 15000.0, 0.5),
    5: ServiceType(5, "mixed", 17000.0, 0.3),
}


@dataclass(slots=True)
class ServiceRequest:
    id: int
    service_type_id: int
    arrival_time: float
    length: float  # MI
    deadline: float | None = None
    user_id: str | None = None
    component: str = "browsing"


@dataclass(frozen=True)
class WorkloadTrace:
    counts: tuple
    instance_duration: float = INSTANCE_DURATION
    scale_cap: int = SCALE_CAP

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise WorkloadError("trace counts must be non-negative")
        if self.counts and max(self.counts) > self.scale_cap:
            raise WorkloadError(f"trace peak {max(self.counts)} exceeds cap {self.scale_cap}")

    def __len__(self):
        return len(self.counts)

    def window(self, index: int) -> tuple[float, float]:
        start = index * self.instance_duration
        return start, start + self.instance_duration


def load_trend(path) -> list[int]:
    """Read one non-negative integer (requests per day) per line."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise TrendFormatError(f"{path}: empty trend file")
    counts = []
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        try:
            value = int(token)
        except ValueError:
            raise TrendFormatError(f"{path}:{lineno}: not an integer: {token!r}") from None
        if value < 0:
            raise TrendFormatError(f"{path}:{lineno}: negative count {value}")
        counts.append(value)
    return counts


def bundled_trace_path() -> Path:
    return Path(str(resources.files("adaptsim") / "data" / "worldcup98_30day.txt"))


def compress_and_scale(raw: Sequence[int], cap: int = SCALE_CAP,
                       instance_duration: float = INSTANCE_DURATION) -> WorkloadTrace:
    """Map each trend day onto one instance and scale so the peak equals ``cap``.

    Rounding is half-up and done in integer arithmetic.
    """
    if not raw:
        raise WorkloadError("empty trend")
    if cap < 1:
        raise WorkloadError("cap must be >= 1")
    peak = max(raw)
    if peak <= 0:
        raise WorkloadError("trend has no requests")
    counts = tuple((2 * int(x) * cap + peak) // (2 * peak) for x in raw)
    return WorkloadTrace(counts=counts, instance_duration=instance_duration, scale_cap=cap)


def _validate_mix(service_mix: Mapping[int, float]) -> None:
    if not service_mix:
        raise WorkloadError("empty service mix")
    unknown = set(service_mix) - set(SERVICE_TYPES)
    if unknown:
        raise WorkloadError(f"unknown service types {sorted(unknown)}")
    if any(p < 0 for p in service_mix.values()):
        raise WorkloadError("negative service share")
    if not math.isclose(sum(service_mix.values()), 100.0, abs_tol=1e-9):
        raise WorkloadError(f"service mix sums to {sum(service_mix.values())}, expected 100")


def generate_interval_requests(trace: WorkloadTrace, interval_index: int,
                               service_mix: Mapping[int, float], *, seed: int = 0,
                               arrival_window: float | None = None, first_id: int = 0,
                               deadline_factor: float = 10.0,
                               reference_mips: float = REFERENCE_MIPS) -> list[ServiceRequest]:
    """Requests for one instance, sorted by arrival time.

    Arrivals are uniform on ``[start, start + arrival_window)``; the window
    defaults to the whole instance.  The generator is seeded from
    ``(seed, interval_index)`` so every interval is reproducible on its own.
    """
    if not 0 <= interval_index < len(trace):
        raise IndexError(f"interval {interval_index} outside trace of {len(trace)}")
    _validate_mix(service_mix)
    n = trace.counts[interval_index]
    if n == 0:
        return []
    start, end = trace.window(interval_index)
    window = trace.instance_duration if arrival_window is None else arrival_window
    if not 0 < window <= trace.instance_duration:
        raise WorkloadError(f"arrival window {window} outside (0, {trace.instance_duration}]")

    rng = np.random.default_rng([seed, interval_index])
    arrivals = np.sort(start + rng.random(n) * window)
    type_ids = sorted(service_mix)
    probs = np.array([service_mix[t] for t in type_ids], dtype=float) / 100.0
    drawn_types = rng.choice(type_ids, size=n, p=probs)
    browse_draws = rng.random(n)

    limit = min(end, start + window)
    requests = []
    for i in range(n):
        arrival = float(arrivals[i])
        if arrival >= limit:
            arrival = math.nextafter(limit, -math.inf)
        stype = SERVICE_TYPES[int(drawn_types[i])]
        component = "browsing" if browse_draws[i] < stype.browsing_share else "bidding"
        requests.append(ServiceRequest(
            id=first_id + i,
            service_type_id=stype.id,
            arrival_time=arrival,
            length=stype.required_mi,
            deadline=arrival + deadline_factor * stype.required_mi / reference_mips,
            component=component,
        ))
    return requests
