"""Fast preparation of spin-squeezed states: ground states, controls, noise and decay."""

from .config import ExperimentConfig, load_config
from .controls import ControlProtocol, CrabAnsatz, linear_ramp
from .crab import OptimizerSettings, optimize, qsl_time
from .fitting import PowerLawFit, fit_power_law
from .lindblad import DissipationConfig, cooperativity_sweep, lindblad_rhs, propagate_density
from .propagation import Method, PropagationConfig, infidelity, propagate, time_to_reach
from .spin import (
    HamiltonianParams,
    build_operators,
    coherent_state,
    ground_state,
    observables,
    squeezing_parameter,
    target_state,
)
from .telegraph import TelegraphConfig, ensemble_squeezing

__all__ = [
    "ControlProtocol",
    "CrabAnsatz",
    "DissipationConfig",
    "ExperimentConfig",
    "HamiltonianParams",
    "Method",
    "OptimizerSettings",
    "PowerLawFit",
    "PropagationConfig",
    "TelegraphConfig",
    "build_operators",
    "coherent_state",
    "cooperativity_sweep",
    "ensemble_squeezing",
    "fit_power_law",
    "ground_state",
    "infidelity",
    "lindblad_rhs",
    "linear_ramp",
    "load_config",
    "observables",
    "optimize",
    "propagate",
    "propagate_density",
    "qsl_time",
    "squeezing_parameter",
    "target_state",
    "time_to_reach",
]
