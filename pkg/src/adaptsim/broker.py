"""Request admission, queueing and assignment of requests to VM vCPUs.

A request occupies exactly one vCPU for ``length / mips_per_vcpu`` seconds.
When a vCPU is free the request starts at once on the VM with the most
free vCPUs (lowest id on ties); otherwise it waits in the queue of the
active policy:

* ``fifo`` / ``single-queue`` - one shared queue by arrival.
* ``earliest-deadline-first`` - one shared queue by deadline.
* ``least-slack-time`` - one shared queue by slack.  All requests lose slack
  at the same rate, so ordering by ``deadline - service_time`` is exact.
* ``multi-queue`` - one queue per VM; idle vCPUs steal from the longest
  queue so no vCPU idles while work waits.
* ``multi-dynamic-queue`` - as ``multi-queue`` but the per-VM queues are
  rebalanced whenever the VM count changes.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from itertools import count

from .cloud import Datacenter, Vm
from .kernel import REQUEST_ARRIVAL, REQUEST_COMPLETION, SimEvent, Simulator
from .workload import ServiceRequest

FIFO = "fifo"
EDF = "earliest-deadline-first"
LST = "least-slack-time"
SINGLE_QUEUE = "single-queue"
MULTI_QUEUE = "multi-queue"
MULTI_DYNAMIC_QUEUE = "multi-dynamic-queue"

POLICIES = (FIFO, EDF, LST, SINGLE_QUEUE, MULTI_QUEUE, MULTI_DYNAMIC_QUEUE)
CENTRAL_POLICIES = (FIFO, EDF, LST, SINGLE_QUEUE)


class BrokerError(RuntimeError):
    pass


@dataclass(slots=True)
class ResponseRecord:
    request_id: int
    service_type_id: int
    arrival_time: float
    start_time: float
    finish_time: float
    response_time: float
    vm_id: int


@dataclass(slots=True)
class _Running:
    request: ServiceRequest
    vm: Vm
    start_time: float
    service_time: float


def _deadline(req: ServiceRequest) -> float:
    return req.deadline if req.deadline is not None else math.inf


def queue_key(policy: str, req: ServiceRequest, mips: float = 2400.0) -> tuple:
    """Sort key of a waiting request under a central policy."""
    if policy == EDF:
        return (_deadline(req), req.arrival_time, req.id)
    if policy == LST:
        return (_deadline(req) - req.length / mips, req.arrival_time, req.id)
    return (req.arrival_time, req.id)


class Broker:
    """Datacenter broker bound to a simulator and a datacenter."""

    def __init__(self, sim: Simulator, datacenter: Datacenter, policy: str = FIFO,
                 reference_mips: float = 2400.0):
        if policy not in POLICIES:
            raise ValueError(f"unknown scheduling policy {policy!r}")
        self.sim = sim
        self.dc = datacenter
        self.policy = policy
        self.reference_mips = reference_mips
        self.records: list[ResponseRecord] = []
        self.running: dict[int, _Running] = {}
        self.arrivals = 0
        self.completions = 0
        self.max_queue_depth = 0
        self._central: list = []
        self._vm_queues: dict[int, deque] = {}
        self._free_heap: list = []
        self._tiebreak = count()
        # bound methods, not closures, so a deep copy rebinds to the copy
        sim.on(REQUEST_ARRIVAL, self._on_arrival)
        sim.on(REQUEST_COMPLETION, self._on_completion)
        datacenter.listeners.append(self._on_vm_change)
        for vm in datacenter.vms.values():
            self._vm_queues.setdefault(vm.id, deque())
            self._push_free(vm)

    # -- bookkeeping ---------------------------------------------------

    @property
    def multi(self) -> bool:
        return self.policy in (MULTI_QUEUE, MULTI_DYNAMIC_QUEUE)

    @property
    def queued_count(self) -> int:
        if self.multi:
            return sum(len(q) for q in self._vm_queues.values())
        return len(self._central)

    @property
    def running_count(self) -> int:
        return len(self.running)

    def queued_requests(self) -> list[ServiceRequest]:
        """Waiting requests in the order they would be served (central) or by VM."""
        if self.multi:
            return [r for vm_id in sorted(self._vm_queues) for r in self._vm_queues[vm_id]]
        return [entry[-1] for entry in sorted(self._central)]

    def reset_peak_queue(self) -> int:
        peak = self.max_queue_depth
        self.max_queue_depth = self.queued_count
        return peak

    def _push_free(self, vm: Vm) -> None:
        if vm.free_vcpus > 0:
            heapq.heappush(self._free_heap, (-vm.free_vcpus, vm.id))

    def _best_free_vm(self) -> Vm | None:
        heap = self._free_heap
        while heap:
            neg_free, vm_id = heap[0]
            vm = self.dc.vms.get(vm_id)
            if vm is not None and vm.free_vcpus == -neg_free:
                return vm
            heapq.heappop(heap)
        return None

    # -- request flow --------------------------------------------------

    def _on_arrival(self, event: SimEvent) -> None:
        self.dispatch(event.payload)

    def _on_completion(self, event: SimEvent) -> None:
        self.complete_request(event.payload)

    def submit(self, request: ServiceRequest) -> None:
        """Schedule the arrival event of ``request``."""
        self.sim.at(request.arrival_time, REQUEST_ARRIVAL, request)

    def dispatch(self, request: ServiceRequest) -> None:
        self.arrivals += 1
        vm = self._best_free_vm()
        if vm is not None:
            self._start(request, vm)
        else:
            self._enqueue(request)

    def _start(self, request: ServiceRequest, vm: Vm) -> None:
        now = self.sim.now
        self.dc.advance(now)
        self.dc.set_busy(vm, +1)
        service = request.length / vm.vm_type.mips_per_vcpu
        self.running[request.id] = _Running(request, vm, now, service)
        self.sim.at(now + service, REQUEST_COMPLETION, request)
        # stale entries for this vm are discarded lazily
        self._push_free(vm)

    def _enqueue(self, request: ServiceRequest) -> None:
        if self.multi:
            self._vm_queues[self._shortest_queue_vm()].append(request)
        else:
            key = queue_key(self.policy, request, self.reference_mips)
            heapq.heappush(self._central, (key, next(self._tiebreak), request))
        depth = self.queued_count
        if depth > self.max_queue_depth:
            self.max_queue_depth = depth

    def _shortest_queue_vm(self) -> int:
        best, best_load = None, None
        for vm_id in sorted(self._vm_queues):
            vm = self.dc.vms[vm_id]
            load = len(self._vm_queues[vm_id]) / vm.vm_type.vcpus
            if best_load is None or load < best_load:
                best, best_load = vm_id, load
        return best

    def _next_for(self, vm: Vm) -> ServiceRequest | None:
        if not self.multi:
            if self._central:
                return heapq.heappop(self._central)[-1]
            return None
        own = self._vm_queues.get(vm.id)
        if own:
            return own.popleft()
        victim = None
        for vm_id in sorted(self._vm_queues):
            q = self._vm_queues[vm_id]
            if q and (victim is None or len(q) > len(self._vm_queues[victim])):
                victim = vm_id
        if victim is None:
            return None
        return self._vm_queues[victim].popleft()

    def _fill(self, vm: Vm) -> int:
        started = 0
        while vm.free_vcpus > 0:
            request = self._next_for(vm)
            if request is None:
                break
            self._start(request, vm)
            started += 1
        return started

    def complete_request(self, request: ServiceRequest) -> ResponseRecord:
        run = self.running.pop(request.id, None)
        if run is None:
            raise BrokerError(f"request {request.id} is not running")
        now = self.sim.now
        self.dc.advance(now)
        vm = run.vm
        self.dc.set_busy(vm, -1)
        # wait + service keeps uncontended response times exact
        record = ResponseRecord(
            request_id=request.id,
            service_type_id=request.service_type_id,
            arrival_time=request.arrival_time,
            start_time=run.start_time,
            finish_time=run.start_time + run.service_time,
            response_time=(run.start_time - request.arrival_time) + run.service_time,
            vm_id=vm.id,
        )
        self.records.append(record)
        self.completions += 1
        self._push_free(vm)
        self._fill(vm)
        return record

    # -- policy and pool changes ----------------------------------------

    def set_scheduling_policy(self, policy: str) -> None:
        if policy not in POLICIES:
            raise ValueError(f"unknown scheduling policy {policy!r}")
        waiting = self._drain_all()
        self.policy = policy
        for request in waiting:
            self._enqueue(request)

    def _drain_all(self) -> list[ServiceRequest]:
        if self.multi:
            waiting = [r for q in self._vm_queues.values() for r in q]
            for q in self._vm_queues.values():
                q.clear()
        else:
            waiting = [entry[-1] for entry in self._central]
            self._central = []
        waiting.sort(key=lambda r: (r.arrival_time, r.id))
        return waiting

    def _on_vm_change(self, event: str, vm: Vm) -> None:
        if event == "added":
            self._vm_queues[vm.id] = deque()
            if self.policy == MULTI_DYNAMIC_QUEUE:
                self._rebalance()
            self._push_free(vm)
            self._fill(vm)
        elif event == "removed":
            orphans = self._vm_queues.pop(vm.id, deque())
            if self.policy == MULTI_DYNAMIC_QUEUE:
                self._rebalance(extra=list(orphans))
            else:
                for request in orphans:
                    self._enqueue(request)

    def _rebalance(self, extra=()) -> None:
        waiting = self._drain_all() + list(extra)
        waiting.sort(key=lambda r: (r.arrival_time, r.id))
        for request in waiting:
            self._enqueue(request)
