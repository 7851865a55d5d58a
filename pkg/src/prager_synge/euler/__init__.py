"""Finite-volume / finite-difference 2D Euler schemes marched to steady state."""
from .schemes import ROSTER, SchemeId
from .solver import (BoundaryData, ConvergenceLog, SolutionEnsemble, SolverConfig,
                     SolverDivergenceError, run_ensemble, run_scheme, run_scheme_with_source,
                     roster_configs, steady_residual)

__all__ = [
    "ROSTER", "SchemeId", "BoundaryData", "ConvergenceLog", "SolutionEnsemble", "SolverConfig",
    "SolverDivergenceError", "run_ensemble", "run_scheme", "run_scheme_with_source",
    "roster_configs", "steady_residual",
]
