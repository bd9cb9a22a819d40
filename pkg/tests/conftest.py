from __future__ import annotations

import sys
from pathlib import Path

import pytest

from adaptsim import Simulation, bundled_preset
from adaptsim.config import COMPARISON_MODES

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def preset():
    return bundled_preset()


@pytest.fixture(scope="session")
def matrix(preset):
    """Full comparison matrix on the bundled trace, keyed by (mode, service)."""
    return {(m, s): Simulation(preset, m, s).run()
            for m in COMPARISON_MODES for s in (1, 2, 3, 4, 5)}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
