"""Projected cyclic Barzilai-Borwein (PCBB) iteration.

Each iterate moves along ``d = P[x - alpha g] - x`` where ``alpha`` is a
safeguarded, cyclically reused BB stepsize and ``P`` the projection onto a
:class:`~pcbb.projection.KnapsackSet`. Steps are accepted by the adaptive
nonmonotone Armijo test of :mod:`pcbb.linesearch`, which in practice takes
the unit step, so most iterations cost one objective and one gradient
evaluation. Iterates stay feasible throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Protocol

import numpy as np

from .config import SolverConfig
from .linesearch import (
    LineSearchError,
    ReferenceState,
    init_reference,
    nonmonotone_armijo,
    record_step,
    select_fR,
    update_reference,
)
from .projection import KnapsackSet, project
from .stepsize import CbbState, StepPair, cbb_update

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILURE = "line_search_failure"


class Objective(Protocol):
    def value(self, x: np.ndarray) -> float: ...

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]: ...


class FunctionObjective:
    """Adapts a callable ``x -> (f, grad)`` to the :class:`Objective` protocol.

    ``value`` uses ``fun_value`` when given, otherwise discards the gradient.
    """

    def __init__(self, fun, fun_value: Optional[Callable[[np.ndarray], float]] = None):
        self.fun = fun
        self.fun_value = fun_value

    def value(self, x):
        if self.fun_value is not None:
            return float(self.fun_value(x))
        return float(self.fun(x)[0])

    def value_and_grad(self, x):
        f, g = self.fun(x)
        return float(f), np.asarray(g, dtype=float)


def as_objective(obj) -> Objective:
    if hasattr(obj, "value") and hasattr(obj, "value_and_grad"):
        return obj
    if callable(obj):
        return FunctionObjective(obj)
    raise TypeError("objective must be callable or provide value/value_and_grad")


@dataclass(frozen=True)
class IterationRecord:
    """One row of the solve history.

    Row 0 describes the starting point; row ``k >= 1`` the step from
    ``x_{k-1}`` to ``x_k``: ``beta`` and ``alpha_bar`` are the step fraction
    and stepsize used for it, ``f`` and ``d1_inf`` are measured at ``x_k``,
    ``sty`` is the curvature ``s.y`` of that step and ``f_ref`` the level of
    the acceptance test. ``evals`` and ``grad_evals`` are cumulative.
    """

    k: int
    f: float
    d1_inf: float
    beta: float
    alpha_bar: float
    evals: int
    grad_evals: int
    sty: float = math.nan
    f_ref: float = math.nan


class StepInfo(NamedTuple):
    """Everything about one accepted step, passed to the solve callback."""

    k: int
    x: np.ndarray
    g: np.ndarray
    d: np.ndarray
    gtd: float
    alpha_bar: float
    f: float
    f_ref: float
    beta: float
    x_new: np.ndarray
    f_new: float
    reference: ReferenceState
    reference_after: ReferenceState
    cbb: CbbState
    cbb_after: CbbState


@dataclass
class SolveResult:
    x_final: np.ndarray
    status: str
    history: list[IterationRecord] = field(default_factory=list)

    @property
    def f_final(self) -> float:
        return self.history[-1].f

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def evals(self) -> int:
        return self.history[-1].evals

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def spectral_direction(x: np.ndarray, g: np.ndarray, alpha_bar: float, kset: KnapsackSet) -> np.ndarray:
    return project(x - alpha_bar * g, kset) - x


def stationarity(x: np.ndarray, g: np.ndarray, kset: KnapsackSet) -> float:
    """``||P[x - g] - x||_inf``; zero exactly at constrained stationary points."""
    d1 = project(x - g, kset) - x
    return float(np.max(np.abs(d1)))


def _directional_derivative(g, d, kset):
    """``g.d`` evaluated as ``(g - nu a).d`` over the moving components.

    ``a.d`` vanishes in exact arithmetic, so removing the multiplier
    estimate ``nu`` changes nothing but the rounding, which otherwise
    dominates near a constrained minimiser where ``g`` is nearly parallel
    to ``a`` on the free components.
    """
    moving = d != 0
    if not np.any(moving):
        return 0.0
    a_m, g_m = kset.a[moving], g[moving]
    nu = float(a_m @ g_m) / float(a_m @ a_m)
    return float((g_m - nu * a_m) @ d[moving])


def _check_finite(f, g, where):
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError(f"non-finite objective or gradient at {where}")


def solve(
    obj,
    kset: KnapsackSet,
    x0: np.ndarray,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[StepInfo], None]] = None,
    on_record: Optional[Callable[[IterationRecord], None]] = None,
) -> SolveResult:
    """Minimise ``obj`` over ``kset`` starting from (the projection of) ``x0``.

    ``callback`` receives a :class:`StepInfo` for every accepted step,
    ``on_record`` every history row as soon as it exists.

    Trial points of the line search are evaluated with ``obj.value``; the
    gradient is requested once per accepted iterate, through
    ``obj.value_and_grad``. Evaluators that cache their last state can thus
    avoid repeating work for the accepted trial point.
    """
    cfg = SolverConfig() if cfg is None else cfg
    obj = as_objective(obj)
    x = project(np.asarray(x0, dtype=float), kset)
    f, g = obj.value_and_grad(x)
    _check_finite(f, g, "x0")
    nf = ng = 1

    d1 = project(x - g, kset) - x
    d1_inf = float(np.max(np.abs(d1)))
    ref = init_reference(f, cfg)
    cbb = CbbState.initial(d1, cfg)
    del d1
    history = [IterationRecord(0, f, d1_inf, math.nan, cbb.alpha_bar, nf, ng)]
    if on_record is not None:
        on_record(history[0])

    status = MAX_ITER
    for k in range(cfg.max_iter + 1):
        if d1_inf <= cfg.tol:
            status = CONVERGED
            break
        if k == cfg.max_iter:
            break
        if k > 0:
            ref = update_reference(ref, f, cfg)
        alpha = cbb.alpha_bar
        trial = project(x - alpha * g, kset)
        d = trial - x
        gtd = _directional_derivative(g, d, kset)
        if not gtd < 0:
            # only reachable through rounding at a numerically stationary point
            status = CONVERGED if not np.any(d) else LINE_SEARCH_FAILURE
            logger.debug("non-descent direction at k=%d (g.d=%g)", k, gtd)
            break
        if cfg.reference_rule == "adaptive":
            f_ref = select_fR(ref, cbb.j)
        elif cfg.reference_rule == "monotone":
            f_ref = f
        else:
            f_ref = ref.f_max

        def point(beta, x=x, d=d, trial=trial):
            # convex combinations stay feasible; the clip removes rounding
            return trial if beta == 1.0 else np.clip(x + beta * d, kset.l, kset.u)

        try:
            ls = nonmonotone_armijo(obj.value, x, d, gtd, f_ref, cfg, point)
        except LineSearchError as exc:
            nf += cfg.max_backtracks + 1
            logger.warning("line search failed at k=%d: %s", k, exc)
            status = LINE_SEARCH_FAILURE
            break
        nf += ls.trial_evals
        beta, x_new = ls.beta, ls.x_new
        f_new, g_new = obj.value_and_grad(x_new)
        _check_finite(f_new, g_new, f"iteration {k + 1}")
        ng += 1

        pair = StepPair(x_new - x, g_new - g)
        sty = pair.sty
        cbb_new = cbb_update(cbb, pair, beta, d, g, x, d1_inf, cfg)
        ref_new = record_step(ref, beta, f_new, cfg)
        if callback is not None:
            callback(StepInfo(k, x, g, d, gtd, alpha, f, f_ref, beta, x_new, f_new, ref, ref_new, cbb, cbb_new))
        x, f, g, cbb, ref = x_new, f_new, g_new, cbb_new, ref_new
        del pair, trial, d

        d1_inf = stationarity(x, g, kset)
        history.append(IterationRecord(k + 1, f, d1_inf, beta, alpha, nf, ng, sty, f_ref))
        if on_record is not None:
            on_record(history[-1])
        logger.debug(
            "k=%d f=%.10e d1=%.3e beta=%g alpha=%.3e sty=%.3e", k + 1, f, d1_inf, beta, alpha, sty
        )

    return SolveResult(x_final=x, status=status, history=history)
