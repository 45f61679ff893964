"""Bound optimization with relaxed bound selection.

The engine generalizes majorization-minimization: instead of requiring each
surrogate upper bound to touch the objective at the current iterate, any
bound whose value there is below a progress threshold is admissible. The
progress coefficient eta in (0, 1] controls how much of the current
bound-objective gap each step must concede; eta = 1 with the greedy
selector recovers classic MM (Lloyd's k-means, CCCP).
"""
from .engine import (Biased, ConfigError, DiagnosticReport, GmmConfig,
                     GmmError, GmmProblem, GmmState, Greedy, IterationRecord,
                     RandomWalk, RunTrace, SelectorError, SolverError,
                     StochasticSubset, UnsupportedSelectorError,
                     check_theorem_diagnostics, is_valid, run,
                     stationarity_gap, validity_threshold)

__all__ = [
    "Biased", "ConfigError", "DiagnosticReport", "GmmConfig", "GmmError",
    "GmmProblem", "GmmState", "Greedy", "IterationRecord", "RandomWalk",
    "RunTrace", "SelectorError", "SolverError", "StochasticSubset",
    "UnsupportedSelectorError", "check_theorem_diagnostics", "is_valid",
    "run", "stationarity_gap", "validity_threshold",
]

__version__ = "0.1.0"
