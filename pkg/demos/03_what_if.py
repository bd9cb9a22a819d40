"""
Asking what-if questions mid-run
================================

Pauses a run partway through an interval and predicts that interval's
outcome under a few candidate decisions without disturbing the live run.
"""

from adaptsim import Simulation, bundled_preset, what_if
from adaptsim.adaptation import AdaptationDecision

config = bundled_preset()
sim = Simulation(config, "self-adaptive", service=2)
sim.start()

# stop shortly after the busiest burst arrives
D = config.trace.instance_duration
peak = config.trace.counts.index(max(config.trace.counts))
sim.advance(peak * D + 1.0)
print("interval", peak, "in flight:", sim.in_flight)

# baseline: do nothing this interval
base, _ = what_if(sim)
print(f"{'no change':>22}: avg {base.avg_response:.2f}  energy {base.energy_kwh:.3f} kWh")

# a few candidate tactics, each probed on its own snapshot
for tactic, step in [("vertical-scaling", 2), ("horizontal-scaling", 1),
                     ("dynamic-scheduling", 1)]:
    d = AdaptationDecision(tactic_id=tactic, magnitude=step, trigger=("demo",),
                           decided_at=sim.kernel.now, decided_by="demo")
    m, report = what_if(sim, d)
    print(f"{tactic:>22}: avg {m.avg_response:.2f}  energy {m.energy_kwh:.3f} kWh  "
          f"[{report.status}]")

# the live run carries on as if nothing happened
result = sim.finish()
print("live run avg response:", round(result.summary.avg_response, 2))
