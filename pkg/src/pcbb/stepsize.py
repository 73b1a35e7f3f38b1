"""Barzilai-Borwein stepsizes and the safeguarded cyclic reuse controller."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import SolverConfig


class StepPair(NamedTuple):
    """Displacement ``s = x_new - x`` and gradient change ``y = g_new - g``."""

    s: np.ndarray
    y: np.ndarray

    @property
    def sty(self) -> float:
        return float(self.s @ self.y)

    def cosine(self) -> float:
        """Cosine of the angle between ``s`` and ``y`` (0 if either vanishes)."""
        ns, ny = float(np.linalg.norm(self.s)), float(np.linalg.norm(self.y))
        if ns == 0.0 or ny == 0.0:
            return 0.0
        return self.sty / (ns * ny)


def bb_step(pair: StepPair) -> float:
    """``s.s / s.y``: the reciprocal of the Rayleigh quotient of the averaged Hessian along ``s``."""
    sty = pair.sty
    if sty == 0.0:
        raise ZeroDivisionError("s.y = 0: BB stepsize undefined")
    return float(pair.s @ pair.s) / sty


def bb2_step(pair: StepPair) -> float:
    """``s.y / y.y``."""
    yty = float(pair.y @ pair.y)
    if yty == 0.0:
        raise ZeroDivisionError("y = 0: BB2 stepsize undefined")
    return pair.sty / yty


def safeguard(alpha: float, alpha_min: float, alpha_max: float) -> float:
    return min(alpha_max, max(alpha_min, alpha))


@dataclass(frozen=True)
class CbbState:
    """Bookkeeping of the cyclic BB controller.

    ``alpha_bar`` is the stepsize for the next iteration, ``j`` counts how
    many unit steps the current BB value has served, ``flag`` forces a
    recomputation at the next update. It is raised only in the initial
    state; later updates raise it internally when a step was truncated.
    """

    alpha_bar: float
    j: int = 0
    flag: bool = True
    m: int = 4
    theta: float = 0.975

    @classmethod
    def initial(cls, d1: np.ndarray, cfg: SolverConfig) -> "CbbState":
        """First stepsize ``1 / ||d1(x0)||``, safeguarded."""
        ord_ = math.inf if cfg.initial_step_norm == "inf" else 2
        nrm = float(np.linalg.norm(d1, ord=ord_))
        alpha = 1.0 / nrm if nrm > 0 else cfg.step_max
        return cls(
            alpha_bar=safeguard(alpha, cfg.step_min, cfg.step_max),
            j=0,
            flag=True,
            m=cfg.cycle_length,
            theta=cfg.parallel_threshold,
        )


def truncated_by_projection(d: np.ndarray, g: np.ndarray, alpha_bar: float) -> bool:
    """True if some component satisfies ``0 < |d_i| < alpha_bar |g_i|``."""
    ad = np.abs(d)
    return bool(np.any((ad > 0) & (ad < alpha_bar * np.abs(g))))


def cbb_update(
    state: CbbState,
    pair: StepPair,
    beta_k: float,
    d_k: np.ndarray,
    g_k: np.ndarray,
    x_k: np.ndarray,
    d1_inf_norm: float,
    cfg: SolverConfig,
) -> CbbState:
    """Advance the controller after an accepted step.

    The current stepsize is reused until the step was cut by the projection
    or by backtracking, ``m`` unit steps have used it, or ``s`` and ``y``
    become nearly parallel. On recomputation a positive curvature ``s.y``
    yields a fresh safeguarded BB step and zero curvature keeps the old value.
    Negative curvature keeps the old value too unless the reuse counter
    passed ``1.5 m``, in which case a large step (see
    ``SolverConfig.negative_curvature_step``) is taken.
    """
    j, alpha_bar = state.j, state.alpha_bar
    flag = state.flag or truncated_by_projection(d_k, g_k, alpha_bar)
    if beta_k == 1.0:
        j += 1
    else:
        flag = True

    sty = pair.sty
    if not (j >= state.m or flag or pair.cosine() >= state.theta):
        return dataclasses.replace(state, j=j, flag=False)

    mode = cfg.negative_curvature_step
    if sty == 0.0:
        # no curvature information along s
        pass
    elif sty < 0.0:
        if mode == "max":
            alpha_bar, j = cfg.step_max, 0
        elif j > 1.5 * state.m:
            if mode == "t":
                if d1_inf_norm > 0:
                    t = min(float(np.max(np.abs(x_k))), 1.0) / d1_inf_norm
                else:
                    t = cfg.step_max
            else:
                t = beta_k
            alpha_bar, j = safeguard(t, cfg.step_min, cfg.step_max), 0
    else:
        alpha_bar, j = safeguard(bb_step(pair), cfg.step_min, cfg.step_max), 0
    return dataclasses.replace(state, alpha_bar=alpha_bar, j=j, flag=False)
