"""Projected cyclic Barzilai-Borwein optimisation over continuous knapsack sets.

The feasible sets are ``{x : a.x = b, l <= x <= u}`` with ``a > 0``. The
package provides the exact projection onto such sets, the spectral projected
gradient solver with cyclic stepsize reuse and an adaptive nonmonotone line
search, and a finite-volume two-material heat-conduction design problem.
"""

from .config import ConfigError, SolverConfig
from .heat_fvm import Grid, HeatObjective, HeatProblem, design_gradient, make_objective
from .projection import EmptySetError, KnapsackSet, brent_root, dual_bracket, dual_residual, project
from .solver import CONVERGED, LINE_SEARCH_FAILURE, MAX_ITER, IterationRecord, SolveResult, solve
from .stepsize import CbbState, StepPair, bb2_step, bb_step, cbb_update, safeguard

__all__ = [
    "CONVERGED",
    "LINE_SEARCH_FAILURE",
    "MAX_ITER",
    "CbbState",
    "ConfigError",
    "EmptySetError",
    "Grid",
    "HeatObjective",
    "HeatProblem",
    "IterationRecord",
    "KnapsackSet",
    "SolveResult",
    "SolverConfig",
    "StepPair",
    "bb2_step",
    "bb_step",
    "brent_root",
    "cbb_update",
    "design_gradient",
    "dual_bracket",
    "dual_residual",
    "make_objective",
    "project",
    "safeguard",
    "solve",
]

__version__ = "0.1.0"
