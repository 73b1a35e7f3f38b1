"""Solver tunables.

Defaults reproduce the parameter set used for the heat-conduction
experiments: sufficient_decrease=1e-4, backtrack_factor=0.5, step bounds
[1e-30, 1e30], unit_step_limit=40, reset_period=10, window=20,
cycle_length=4, both reference ratios 2 and parallel_threshold=0.975.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

NEGATIVE_CURVATURE_STEPS = ("t", "beta", "max")
INITIAL_STEP_NORMS = ("inf", "2")
REFERENCE_RULES = ("adaptive", "monotone", "max")


class ConfigError(ValueError):
    """Raised when a configuration value is out of range.

    ``section`` and ``key`` name the offending entry when known.
    """

    def __init__(self, message: str, section: Optional[str] = None, key: Optional[str] = None):
        super().__init__(message)
        self.section = section
        self.key = key


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the projected cyclic BB iteration.

    Attributes:
        tol: Stop once ``||P[x - g] - x||_inf <= tol``.
        sufficient_decrease: Armijo parameter, in (0, 1).
        backtrack_factor: Step fraction decay during backtracking, in (0, 1).
        step_min, step_max: Safeguard interval for the BB stepsize.
        unit_step_limit: Consecutive unit steps before the reference value
            may be raised to the window maximum.
        reset_period: Iterations without a significant decrease before the
            reference value is reset.
        window: Number of recent objective values kept for the window max.
        cycle_length: How many times one BB stepsize may be reused.
        maxmin_ratio, max_ratio: Ratio thresholds of the reference update,
            both > 1.
        parallel_threshold: Recompute the BB step when the cosine between
            ``s`` and ``y`` reaches this value; in (0, 1).
        decrease_tol: Size of a "significant" decrease. ``None`` selects
            ``max(1e-12, 1e-6 * |f(x0)|)`` at solve time.
        max_iter: Iteration cap.
        max_backtracks: Backtracking cap before reporting a line-search
            failure.
        negative_curvature_step: Stepsize adopted on negative curvature once
            the reuse counter exceeds 1.5 cycles. ``"t"`` uses
            ``min(||x||_inf, 1) / ||d1||_inf``, ``"beta"`` the accepted step
            fraction, ``"max"`` jumps to ``step_max`` whenever negative
            curvature triggers a recomputation.
        initial_step_norm: Norm of ``d1(x0)`` whose reciprocal is the first
            stepsize, ``"inf"`` or ``"2"``.
        reference_rule: Acceptance level of the line search. ``"adaptive"``
            is the nonmonotone reference value, ``"monotone"`` the current
            objective (classic Armijo) and ``"max"`` the window maximum.
    """

    tol: float = 1e-6
    sufficient_decrease: float = 1e-4
    backtrack_factor: float = 0.5
    step_min: float = 1e-30
    step_max: float = 1e30
    unit_step_limit: int = 40
    reset_period: int = 10
    window: int = 20
    cycle_length: int = 4
    maxmin_ratio: float = 2.0
    max_ratio: float = 2.0
    parallel_threshold: float = 0.975
    decrease_tol: Optional[float] = None
    max_iter: int = 1000
    max_backtracks: int = 60
    negative_curvature_step: str = "t"
    initial_step_norm: str = "inf"
    reference_rule: str = "adaptive"

    def __post_init__(self):
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)

        check(self.tol >= 0, f"tol must be >= 0, got {self.tol}")
        check(0 < self.sufficient_decrease < 1, "sufficient_decrease must lie in (0, 1)")
        check(0 < self.backtrack_factor < 1, "backtrack_factor must lie in (0, 1)")
        check(
            0 < self.step_min <= self.step_max < math.inf,
            "need 0 < step_min <= step_max < inf",
        )
        check(
            self.unit_step_limit > self.reset_period > 0,
            "need unit_step_limit > reset_period > 0",
        )
        check(self.window >= 1, "window must be >= 1")
        check(self.cycle_length >= 1, "cycle_length must be >= 1")
        check(self.maxmin_ratio > 1 and self.max_ratio > 1, "reference ratios must exceed 1")
        check(0 < self.parallel_threshold < 1, "parallel_threshold must lie in (0, 1)")
        check(
            self.decrease_tol is None or self.decrease_tol > 0,
            "decrease_tol must be positive",
        )
        check(self.max_iter >= 0, "max_iter must be >= 0")
        check(self.max_backtracks >= 1, "max_backtracks must be >= 1")
        check(
            self.negative_curvature_step in NEGATIVE_CURVATURE_STEPS,
            f"negative_curvature_step must be one of {NEGATIVE_CURVATURE_STEPS}",
        )
        check(
            self.initial_step_norm in INITIAL_STEP_NORMS,
            f"initial_step_norm must be one of {INITIAL_STEP_NORMS}",
        )
        check(
            self.reference_rule in REFERENCE_RULES,
            f"reference_rule must be one of {REFERENCE_RULES}",
        )

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def resolve_decrease_tol(self, f0: float) -> float:
        if self.decrease_tol is not None:
            return self.decrease_tol
        return max(1e-12, 1e-6 * abs(f0))
