from __future__ import annotations

import math

import pytest
from hypothesis import given, settings, strategies as st

from adaptsim.cloud import (IBM_X3550, M4_2XLARGE, M4_LARGE, M4_XLARGE, CapacityExhausted,
                            CloudError, Datacenter, HostSpec, MigrationRefused,
                            PowerStateRefused, host_power_draw)


def test_reference_host_and_vm_specs():
    # 2 sockets x 6 cores at 3067 MIPS
    assert IBM_X3550.capacity_mips == 12 * 3067
    assert [(t.vcpus, t.cost_rate) for t in (M4_LARGE, M4_XLARGE, M4_2XLARGE)] == \
        [(2, 0.1), (4, 0.2), (8, 0.4)]
    assert {t.mips_per_vcpu for t in (M4_LARGE, M4_XLARGE, M4_2XLARGE)} == {2400.0}


def test_power_is_linear_in_utilisation():
    dc = Datacenter()
    host = dc.power_on_host()
    assert host_power_draw(host, 0.0) == 200.0
    assert host_power_draw(host, 1.0) == 400.0
    assert host_power_draw(host, 0.25) == 250.0
    with pytest.raises(ValueError):
        host_power_draw(host, 1.5)


def test_three_xlarge_fit_per_host():
    # 3 x 9600 = 28800 <= 36804 < 4 x 9600
    dc = Datacenter()
    dc.power_on_host()
    for _ in range(4):
        dc.provision_vm("m4.xlarge")
    assert dc.powered_count == 2
    assert sorted(len(h.vms) for h in dc.hosts) == [1, 3]


def test_host_pool_is_bounded():
    dc = Datacenter(max_hosts=2)
    dc.power_on_host()
    dc.power_on_host()
    with pytest.raises(CapacityExhausted):
        dc.power_on_host()


def test_power_off_refusals():
    dc = Datacenter()
    a = dc.power_on_host()
    b = dc.power_on_host()
    dc.provision_vm("m4.large", host=b)
    with pytest.raises(PowerStateRefused):
        dc.set_host_power(b, False)
    dc.set_host_power(a, False)
    assert dc.powered_count == 1
    dc.deprovision_vm(next(iter(b.vms.values())))
    with pytest.raises(PowerStateRefused):
        dc.set_host_power(b, False)


def test_busy_vms_cannot_move_or_vanish():
    dc = Datacenter()
    dc.power_on_host()
    target = dc.power_on_host()
    vm = dc.provision_vm("m4.large")
    dc.set_busy(vm, +1)
    with pytest.raises(MigrationRefused):
        dc.migrate_vm(vm, target)
    with pytest.raises(CloudError):
        dc.deprovision_vm(vm)
    with pytest.raises(CloudError):
        dc.set_busy(vm, +2)


def test_migration_respects_target_capacity():
    dc = Datacenter(host_spec=HostSpec(cores=4, mips_per_core=2400))
    a = dc.power_on_host()
    b = dc.power_on_host()
    big = dc.provision_vm("m4.xlarge", host=a)
    dc.provision_vm("m4.large", host=b)
    with pytest.raises(MigrationRefused):
        dc.migrate_vm(big, b)


def test_idle_host_for_an_hour():
    dc = Datacenter()
    dc.power_on_host()
    dc.provision_vm("m4.large")
    dc.accrue(3600.0)
    assert math.isclose(dc.total_energy, 0.2)  # 200 W for 1 h
    assert math.isclose(dc.total_cost, 0.1)


def test_retired_vm_cost_is_kept():
    dc = Datacenter()
    dc.power_on_host()
    keep = dc.provision_vm("m4.large")
    gone = dc.provision_vm("m4.2xlarge")
    dc.accrue(1800.0)
    dc.deprovision_vm(gone)
    dc.accrue(1800.0)
    assert math.isclose(dc.total_cost, 0.1 + 0.2)
    assert keep.id in dc.vms


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.0, 500.0), st.integers(0, 5), st.booleans()),
                min_size=1, max_size=40))
def test_lazy_settlement_matches_piecewise_integration(steps):
    """Energy from lazy settlement equals a direct step-function integral."""
    dc = Datacenter()
    dc.power_on_host()
    vms = [dc.provision_vm(t) for t in ("m4.large", "m4.xlarge", "m4.2xlarge",
                                        "m4.xlarge", "m4.xlarge", "m4.large")]
    cap = IBM_X3550.capacity_mips
    busy_mips = {h.id: 0.0 for h in dc.hosts}
    now, expected = 0.0, 0.0
    for dt, which, up in steps:
        for h in dc.hosts:
            expected += (200.0 + 200.0 * min(1.0, busy_mips[h.id] / cap)) * dt
        now += dt
        dc.advance(now)
        vm = vms[which]
        delta = 1 if up else -1
        if 0 <= vm.busy_vcpus + delta <= vm.vm_type.vcpus:
            dc.set_busy(vm, delta)
            busy_mips[vm.host_id] += delta * 2400.0
    dc.settle()
    assert math.isclose(dc.total_energy, expected / 3.6e6, rel_tol=1e-9, abs_tol=1e-15)
