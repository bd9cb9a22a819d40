from __future__ import annotations

import subprocess
import sys

from adaptsim.cli import main
from adaptsim.config import preset_path
from adaptsim.experiment import Simulation


def test_validate_preset(capsys):
    assert main(["validate"]) == 0
    assert "30 instances, peak 700" in capsys.readouterr().out


def test_validate_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(preset_path().read_text().replace("tactic = concurrency", "tactic = nope"))
    assert main(["validate", "--config", str(bad)]) == 2
    assert "[rule.R2]" in capsys.readouterr().err


def test_run_and_compare(tmp_path, capsys):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--mode", "non-adaptive", "--service", "1", "--duration", "2",
                 "--out", str(out_a)]) == 0
    assert main(["run", "--mode", "goal-aware", "--service", "1", "--duration", "2",
                 "--seed", "5", "--out", str(out_b)]) == 0
    assert (out_a / "non-adaptive" / "service-1" / "intervals.csv").exists()
    joined = tmp_path / "joined.csv"
    assert main(["compare", str(out_a / "summary.csv"), str(out_b / "summary.csv"),
                 "--out", str(joined)]) == 0
    lines = joined.read_text().splitlines()
    assert len(lines) == 1 + 4  # two modes, one service row and one avg row each
    assert lines[1].startswith("non-adaptive,1,4.166666666666667,")
    assert "goal-aware    avg" in capsys.readouterr().out


def test_failed_pair_gives_nonzero_exit(tmp_path, monkeypatch):
    def boom(self, event):
        raise RuntimeError("injected")

    monkeypatch.setattr(Simulation, "_on_boundary", boom)
    assert main(["run", "--mode", "non-adaptive", "--service", "1", "--duration", "1",
                 "--out", str(tmp_path)]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "adaptsim.cli", "validate"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok:")
