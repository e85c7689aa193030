"""Near-field XL-IRS cascaded channel simulation and sparse Tucker estimation."""

from .analysis import CrlbInputs, crlb, nmse, trace_bound_check
from .channel_model import SystemConfig, sample_scenario
from .estimator import Hyperparams, estimate, estimate_channels
from .harness import ExperimentConfig, load_config, run_experiment
from .observation import build_phase_schedule, observe, observe_snr

__version__ = "0.1.0"

__all__ = [
    "CrlbInputs",
    "ExperimentConfig",
    "Hyperparams",
    "SystemConfig",
    "build_phase_schedule",
    "crlb",
    "estimate",
    "estimate_channels",
    "load_config",
    "nmse",
    "observe",
    "observe_snr",
    "run_experiment",
    "sample_scenario",
    "trace_bound_check",
]
