"""Discrete-event simulation of a cloud datacenter under adaptive and self-aware control."""

from .config import MODES, ConfigError, ExperimentConfig, bundled_preset, parse_config
from .experiment import RunResult, Simulation, run_experiment, what_if

__version__ = "0.1.0"

__all__ = ["MODES", "ConfigError", "ExperimentConfig", "RunResult", "Simulation",
           "bundled_preset", "parse_config", "run_experiment", "what_if", "__version__"]
