"""Pseudo-spectral simulation and verification of biharmonic wave maps on flat tori."""

from .config import RunConfig, load_config
from .diagnostics import DiagnosticsRecord, Monitor, energy, higher_energy
from .errors import (BelowInjectivityThreshold, ConfigError, ConstraintEscape, EpsilonOutOfRange,
                     NonFinite, NumericalAbort, OutsideTube)
from .evolver import Evolver, EvolverConfig, State, build_propagator, default_dt, evolve
from .geometry import TargetManifold
from .grid import PeriodicGrid
from .nonlinearity import Nonlinearity, evaluate_nonlinearity, evaluate_regularized_nonlinearity

__version__ = "0.1.0"

__all__ = [
    "BelowInjectivityThreshold", "ConfigError", "ConstraintEscape", "DiagnosticsRecord",
    "EpsilonOutOfRange", "Evolver", "EvolverConfig", "Monitor", "NonFinite", "Nonlinearity",
    "NumericalAbort", "OutsideTube", "PeriodicGrid", "RunConfig", "State", "TargetManifold",
    "build_propagator", "default_dt", "energy", "evaluate_nonlinearity",
    "evaluate_regularized_nonlinearity", "evolve", "higher_energy", "load_config",
]
