"""Adaptive nonmonotone reference values and Armijo backtracking.

The reference value ``f_r`` is kept between the current objective and the
maximum over a window of recent values. It is relaxed towards that maximum
after long runs of unit steps and tightened every ``reset_period``
iterations without a significant decrease.

Per iteration the solver calls :func:`update_reference` (reference for the
current iterate), :func:`select_fR`, :func:`nonmonotone_armijo` and finally
:func:`record_step` with the accepted step.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import SolverConfig


class LineSearchError(RuntimeError):
    """Backtracking exceeded its cap without satisfying the acceptance test."""


@dataclass(frozen=True)
class ReferenceState:
    """Nonmonotone bookkeeping.

    Attributes:
        f_r: Reference value for the current iteration.
        f_min: Best value, updated only on decreases larger than ``decrease_tol``.
        f_maxmin: Largest value seen since ``f_min`` was last updated.
        recent: Last ``min(k + 1, window)`` objective values, oldest first.
        a: Number of consecutive unit steps.
        l: Iterations since the last significant decrease.
        decrease_tol: Threshold of a significant decrease.
    """

    f_r: float
    f_min: float
    f_maxmin: float
    recent: tuple[float, ...]
    a: int = 0
    l: int = 0
    decrease_tol: float = 1e-12

    @property
    def f_max(self) -> float:
        return max(self.recent)

    @property
    def f_current(self) -> float:
        return self.recent[-1]


@dataclass(frozen=True)
class LineSearchResult:
    beta: float
    trial_evals: int
    f_new: float
    x_new: Optional[np.ndarray] = None


def init_reference(f0: float, cfg: SolverConfig) -> ReferenceState:
    if not math.isfinite(f0):
        raise ValueError(f"initial objective value is not finite: {f0}")
    f0 = float(f0)
    return ReferenceState(
        f_r=f0,
        f_min=f0,
        f_maxmin=f0,
        recent=(f0,),
        decrease_tol=cfg.resolve_decrease_tol(f0),
    )


def update_reference(state: ReferenceState, f_k: float, cfg: SolverConfig) -> ReferenceState:
    """Choose the reference value for the iterate whose objective is ``f_k``.

    ``state`` must already hold ``f_k`` (see :func:`record_step`). Zero
    denominators count as a satisfied ratio test.
    """
    f_max = state.f_max
    if state.l == cfg.reset_period:
        spread = state.f_maxmin - state.f_min
        ratio = math.inf if spread == 0 else (f_max - state.f_min) / spread
        f_r = state.f_maxmin if ratio >= cfg.maxmin_ratio else f_max
        return dataclasses.replace(state, f_r=f_r, l=0)
    if state.a > cfg.unit_step_limit:
        if f_max > f_k and (state.f_r - f_k) / (f_max - f_k) >= cfg.max_ratio:
            return dataclasses.replace(state, f_r=f_max)
    return state


def select_fR(state: ReferenceState, cycle_pos: int) -> float:
    """Acceptance level: ``f_r`` on the first step of a BB cycle, else ``min(f_r, f_max)``."""
    if cycle_pos == 0:
        return state.f_r
    return min(state.f_r, state.f_max)


def record_step(state: ReferenceState, beta: float, f_next: float, cfg: SolverConfig) -> ReferenceState:
    """Book an accepted step of fraction ``beta`` landing at value ``f_next``."""
    a = state.a + 1 if beta == 1.0 else 0
    if f_next <= state.f_min - state.decrease_tol:
        f_min = f_maxmin = f_next
        l = 0
    else:
        f_min = state.f_min
        f_maxmin = max(state.f_maxmin, f_next)
        l = state.l + 1
    recent = (state.recent + (float(f_next),))[-cfg.window:]
    return dataclasses.replace(state, a=a, l=l, f_min=f_min, f_maxmin=f_maxmin, recent=recent)


def nonmonotone_armijo(
    value: Callable[[np.ndarray], float],
    x: np.ndarray,
    d: np.ndarray,
    gtd: float,
    f_R: float,
    cfg: SolverConfig,
    point: Optional[Callable[[float], np.ndarray]] = None,
) -> LineSearchResult:
    """Largest ``beta = eta**j`` with ``f(x + beta d) <= f_R + beta * delta * g.d``.

    ``value`` evaluates the objective only; a non-finite trial value is
    rejected like any other. ``point(beta)`` may supply the trial point
    (for instance ``x + beta d`` with rounding removed); the accepted point
    is returned as ``x_new`` so the caller continues from exactly what was
    tested. Raises :class:`LineSearchError` after ``cfg.max_backtracks``
    reductions.
    """
    delta, eta = cfg.sufficient_decrease, cfg.backtrack_factor
    for j in range(cfg.max_backtracks + 1):
        beta = eta**j
        trial = x + beta * d if point is None else point(beta)
        f_trial = float(value(trial))
        if f_trial <= f_R + beta * delta * gtd:
            return LineSearchResult(beta=beta, trial_evals=j + 1, f_new=f_trial, x_new=trial)
    raise LineSearchError(
        f"no acceptable step after {cfg.max_backtracks} reductions (g.d = {gtd:.3e}, f_R = {f_R:.6e})"
    )
