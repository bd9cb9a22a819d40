"""
Comparing controllers
=====================

Runs each comparison mode on the same trace and prints the summary table
the CLI would write to summary.csv.
"""

from adaptsim import Simulation, bundled_preset
from adaptsim.config import COMPARISON_MODES
from adaptsim.metrics import format_table

config = bundled_preset()

# same seed and service for every mode, so only the controller differs
rows = []
for mode in COMPARISON_MODES:
    result = Simulation(config, mode, service=2).run()
    rows.append(result.summary)
    print(f"{mode:>18}: {len(result.decisions)} decisions")

print(format_table(rows))

# adaptive modes start small and grow on demand; the static one pays for
# idle capacity the whole time
