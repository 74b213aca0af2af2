"""Zeno Python Library.

Monte Carlo simulation and run-length analysis of a single two-level ion
under repeated drive and probe pulses.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, ZenoSettings, load_experiment_config
from .dynamics import (
    bloch_propagate,
    excitation_probability,
    survival_coherent,
    survival_measured_ideal,
    survival_model,
)
from .exceptions import (
    ZenoConfigError,
    ZenoError,
    ZenoEstimatorError,
    ZenoFitError,
    ZenoFormatError,
    ZenoValidationError,
)
from .experiment import ZenoExperiment, analyze_trajectories
from .models import (
    BlochState,
    DriveConfig,
    FitResult,
    Mode,
    Outcome,
    RunHistogram,
    SurvivalModel,
    Trajectory,
)
from .protocol import (
    evolve_unobserved,
    generate_batch,
    generate_trajectory,
    measure_once,
    spectrum_scan,
    zeno_scan,
)
from .statistics import (
    expected_run_counts,
    fit_survival,
    run_lengths,
    transition_counts,
    v_obs,
)

__all__ = [
    "BlochState",
    "DriveConfig",
    "ExperimentConfig",
    "FitResult",
    "Mode",
    "Outcome",
    "RunHistogram",
    "SurvivalModel",
    "Trajectory",
    "ZenoExperiment",
    "ZenoSettings",
    "ZenoError",
    "ZenoConfigError",
    "ZenoEstimatorError",
    "ZenoFitError",
    "ZenoFormatError",
    "ZenoValidationError",
    "analyze_trajectories",
    "bloch_propagate",
    "evolve_unobserved",
    "excitation_probability",
    "expected_run_counts",
    "fit_survival",
    "generate_batch",
    "generate_trajectory",
    "load_experiment_config",
    "measure_once",
    "run_lengths",
    "spectrum_scan",
    "survival_coherent",
    "survival_measured_ideal",
    "survival_model",
    "transition_counts",
    "v_obs",
    "zeno_scan",
]
