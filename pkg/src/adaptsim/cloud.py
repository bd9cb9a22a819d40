"""Hosts, virtual machines and the datacenter that owns them.

Energy and cost are accounted lazily: every host and VM remembers the
instant it was last settled, and is settled up to the datacenter clock
before anything that changes its power draw or lifetime.  Because power is
piecewise constant between such changes this gives exactly the same totals
as accruing every object at every event.
"""

from __future__ import annotations

from dataclasses import dataclass, field

JOULES_PER_KWH = 3.6e6


class CloudError(RuntimeError):
    pass


class CapacityExhausted(CloudError):
    pass


class MigrationRefused(CloudError):
    pass


class PowerStateRefused(CloudError):
    pass


@dataclass(frozen=True)
class HostSpec:
    cores: int
    mips_per_core: float
    ram: float = 256.0
    idle_power: float = 200.0
    max_power: float = 400.0
    name: str = "host"

    def __post_init__(self):
        if self.cores < 1 or self.mips_per_core <= 0:
            raise ValueError("host needs at least one core with positive MIPS")
        if self.idle_power > self.max_power:
            raise ValueError("idle_power must not exceed max_power")

    @property
    def capacity_mips(self) -> float:
        return self.cores * self.mips_per_core


@dataclass(frozen=True)
class VmType:
    name: str
    vcpus: int
    mips_per_vcpu: float
    ram: float
    cost_rate: float  # dollars per hour

    def __post_init__(self):
        if self.vcpus < 1:
            raise ValueError(f"{self.name}: vcpus must be >= 1")
        if self.cost_rate <= 0:
            raise ValueError(f"{self.name}: cost_rate must be positive")

    @property
    def mips(self) -> float:
        return self.vcpus * self.mips_per_vcpu


# Amazon EC2 general purpose generation 4, 2.4 GHz vCPUs.
M4_LARGE = VmType("m4.large", 2, 2400.0, 8.0, 0.1)
M4_XLARGE = VmType("m4.xlarge", 4, 2400.0, 16.0, 0.2)
M4_2XLARGE = VmType("m4.2xlarge", 8, 2400.0, 32.0, 0.4)
DEFAULT_VM_TYPES = (M4_LARGE, M4_XLARGE, M4_2XLARGE)

# IBM x3550: 2 x Xeon X5675 (6 cores each) at 3067 MIPS per core.
IBM_X3550 = HostSpec(cores=12, mips_per_core=3067.0, ram=256.0,
                     idle_power=200.0, max_power=400.0, name="IBM x3550")


def host_power_draw(host: "Host", utilization: float) -> float:
    """Linear power model: idle draw plus a share of the dynamic range."""
    if not 0.0 <= utilization <= 1.0:
        raise ValueError(f"utilization {utilization} outside [0, 1]")
    if not host.powered_on:
        return 0.0
    spec = host.spec
    return spec.idle_power + utilization * (spec.max_power - spec.idle_power)


@dataclass(eq=False)
class Vm:
    id: int
    vm_type: VmType
    host_id: int
    busy_vcpus: int = 0
    cost_accrued: float = 0.0
    created_at: float = 0.0
    last_settled: float = 0.0

    @property
    def free_vcpus(self) -> int:
        return self.vm_type.vcpus - self.busy_vcpus

    @property
    def idle(self) -> bool:
        return self.busy_vcpus == 0


@dataclass(eq=False)
class Host:
    id: int
    spec: HostSpec
    powered_on: bool = False
    vms: dict = field(default_factory=dict)  # vm id -> Vm
    energy_used: float = 0.0  # kWh
    allocated_mips: float = 0.0
    busy_mips: float = 0.0
    last_settled: float = 0.0

    @property
    def free_mips(self) -> float:
        return self.spec.capacity_mips - self.allocated_mips

    @property
    def utilization(self) -> float:
        if not self.powered_on:
            return 0.0
        return min(1.0, self.busy_mips / self.spec.capacity_mips)

    @property
    def power(self) -> float:
        return host_power_draw(self, self.utilization)

    def fits(self, vm_type: VmType) -> bool:
        # small slack absorbs float round-off in repeated add/subtract
        return self.powered_on and vm_type.mips <= self.free_mips + 1e-6


class Datacenter:
    """Pool of hosts (created lazily up to ``max_hosts``) and the VMs on them."""

    def __init__(self, host_spec: HostSpec = IBM_X3550, max_hosts: int = 1000,
                 vm_catalog=DEFAULT_VM_TYPES):
        if max_hosts < 1:
            raise ValueError("max_hosts must be >= 1")
        self.host_spec = host_spec
        self.max_hosts = max_hosts
        self.vm_catalog = {t.name: t for t in vm_catalog}
        self.hosts: list[Host] = []
        self.vms: dict[int, Vm] = {}
        self.now = 0.0
        self.retired_cost = 0.0
        self._next_vm_id = 0
        self.listeners = []  # called as listener(event_name, vm)

    # -- accounting ----------------------------------------------------

    def advance(self, now: float) -> None:
        """Move the accounting clock forward; objects settle lazily."""
        if now < self.now:
            raise ValueError(f"accounting clock cannot go back ({now} < {self.now})")
        self.now = now

    def _settle_host(self, host: Host) -> None:
        dt = self.now - host.last_settled
        if dt > 0 and host.powered_on:
            host.energy_used += host.power * dt / JOULES_PER_KWH
        host.last_settled = self.now

    def _settle_vm(self, vm: Vm) -> None:
        dt = self.now - vm.last_settled
        if dt > 0:
            vm.cost_accrued += vm.vm_type.cost_rate * dt / 3600.0
        vm.last_settled = self.now

    def settle(self) -> None:
        for host in self.hosts:
            self._settle_host(host)
        for vm in self.vms.values():
            self._settle_vm(vm)

    def accrue(self, dt: float) -> None:
        """Charge every powered host and live VM for ``dt`` more seconds."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.settle()
        self.advance(self.now + dt)
        self.settle()

    @property
    def total_energy(self) -> float:
        """kWh, as of the last settle."""
        return sum(h.energy_used for h in self.hosts)

    @property
    def total_cost(self) -> float:
        """Dollars, as of the last settle."""
        return self.retired_cost + sum(vm.cost_accrued for vm in self.vms.values())

    @property
    def power(self) -> float:
        return sum(h.power for h in self.hosts if h.powered_on)

    @property
    def cost_rate(self) -> float:
        return sum(vm.vm_type.cost_rate for vm in self.vms.values())

    # -- queries -------------------------------------------------------

    @property
    def powered_hosts(self) -> list[Host]:
        return [h for h in self.hosts if h.powered_on]

    @property
    def powered_count(self) -> int:
        return sum(1 for h in self.hosts if h.powered_on)

    @property
    def vm_count(self) -> int:
        return len(self.vms)

    @property
    def total_vcpus(self) -> int:
        return sum(vm.vm_type.vcpus for vm in self.vms.values())

    def host(self, host_id: int) -> Host:
        return self.hosts[host_id]

    # -- mutations -----------------------------------------------------

    def power_on_host(self) -> Host:
        """Power on the lowest-id dark host, creating one if the pool allows."""
        for host in self.hosts:
            if not host.powered_on:
                self.set_host_power(host, True)
                return host
        if len(self.hosts) >= self.max_hosts:
            raise CapacityExhausted(f"all {self.max_hosts} hosts already running")
        host = Host(id=len(self.hosts), spec=self.host_spec, last_settled=self.now)
        self.hosts.append(host)
        self.set_host_power(host, True)
        return host

    def set_host_power(self, host: Host, on: bool) -> None:
        if host.powered_on == on:
            return
        if not on:
            if host.vms:
                raise PowerStateRefused(f"host {host.id} still runs {len(host.vms)} VMs")
            if self.powered_count <= 1:
                raise PowerStateRefused("at least one host must stay powered on")
        self._settle_host(host)
        host.powered_on = on

    def _attach(self, vm: Vm, host: Host) -> None:
        self._settle_host(host)
        host.vms[vm.id] = vm
        host.allocated_mips += vm.vm_type.mips
        host.busy_mips += vm.busy_vcpus * vm.vm_type.mips_per_vcpu
        vm.host_id = host.id

    def _detach(self, vm: Vm) -> Host:
        host = self.hosts[vm.host_id]
        self._settle_host(host)
        del host.vms[vm.id]
        host.allocated_mips -= vm.vm_type.mips
        host.busy_mips -= vm.busy_vcpus * vm.vm_type.mips_per_vcpu
        if not host.vms:
            host.allocated_mips = 0.0
            host.busy_mips = 0.0
        return host

    def first_fit(self, vm_type: VmType, exclude: Host | None = None) -> Host | None:
        for host in self.hosts:
            if host is not exclude and host.fits(vm_type):
                return host
        return None

    def provision_vm(self, vm_type: VmType | str, host: Host | None = None) -> Vm:
        """Place a new VM first-fit by host id, powering a host on if none fits."""
        if isinstance(vm_type, str):
            vm_type = self.vm_catalog[vm_type]
        if vm_type.mips > self.host_spec.capacity_mips:
            raise CapacityExhausted(f"{vm_type.name} is larger than a host")
        if host is None:
            host = self.first_fit(vm_type)
        elif not host.fits(vm_type):
            raise CapacityExhausted(f"host {host.id} cannot fit {vm_type.name}")
        if host is None:
            host = self.power_on_host()
        vm = Vm(id=self._next_vm_id, vm_type=vm_type, host_id=host.id,
                created_at=self.now, last_settled=self.now)
        self._next_vm_id += 1
        self._attach(vm, host)
        self.vms[vm.id] = vm
        for listener in self.listeners:
            listener("added", vm)
        return vm

    def deprovision_vm(self, vm: Vm) -> None:
        if not vm.idle:
            raise CloudError(f"vm {vm.id} has running requests")
        self._settle_vm(vm)
        self._detach(vm)
        self.retired_cost += vm.cost_accrued
        del self.vms[vm.id]
        for listener in self.listeners:
            listener("removed", vm)

    def migrate_vm(self, vm: Vm, target: Host) -> None:
        """Move an idle VM to ``target``; migration is instantaneous and free."""
        if not vm.idle:
            raise MigrationRefused(f"vm {vm.id} has in-flight requests")
        if target.id == vm.host_id:
            return
        if not target.fits(vm.vm_type):
            raise MigrationRefused(
                f"host {target.id} lacks {vm.vm_type.mips:g} MIPS for vm {vm.id}")
        self._detach(vm)
        self._attach(vm, target)

    def set_busy(self, vm: Vm, delta: int) -> None:
        """Occupy (delta > 0) or release (delta < 0) vCPUs on ``vm``."""
        busy = vm.busy_vcpus + delta
        if not 0 <= busy <= vm.vm_type.vcpus:
            raise CloudError(f"vm {vm.id}: busy vCPUs would become {busy}")
        host = self.hosts[vm.host_id]
        self._settle_host(host)
        vm.busy_vcpus = busy
        host.busy_mips += delta * vm.vm_type.mips_per_vcpu
        if host.busy_mips < 1e-6:
            host.busy_mips = 0.0
