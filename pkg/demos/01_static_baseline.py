"""
A static datacenter under a bursty trace
========================================

Runs the non-adaptive deployment for one service type and looks at how
response time, energy and cost evolve interval by interval.
"""

import numpy as np

from adaptsim import Simulation, bundled_preset

# load the bundled preset and keep the run short
config = bundled_preset().with_overrides(duration=10)

# one simulation: fixed hosts and VMs, no controller
sim = Simulation(config, "non-adaptive", service=2)
result = sim.run()

# per-interval series as numpy arrays
rt = np.array([m.avg_response or 0.0 for m in result.intervals])
energy = np.array([m.energy_kwh for m in result.intervals])
print("mean response per interval:", np.round(rt, 2))
print("energy per interval (kWh): ", np.round(energy, 3))

# the totals match the summary row
s = result.summary
print(f"{s.requests} requests, avg {s.avg_response:.2f}, "
      f"{s.energy_kwh:.2f} kWh, {s.cost_usd:.2f} $")
