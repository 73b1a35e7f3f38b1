"""Per-iteration invariant checks attached to the solver callback."""

from __future__ import annotations

import numpy as np

from pcbb.projection import KnapsackSet


class InvariantChecker:
    """Collects violated per-iteration invariants instead of raising inside the solver."""

    def __init__(self, kset: KnapsackSet, cfg, feas_rtol: float = 1e-12):
        self.kset = kset
        self.cfg = cfg
        self.feas_rtol = feas_rtol
        self.steps = 0
        self.failures: list[str] = []

    def _fail(self, k, msg):
        self.failures.append(f"k={k}: {msg}")

    def _feasible(self, k, x, name):
        ks = self.kset
        if np.any(x < ks.l) or np.any(x > ks.u):
            self._fail(k, f"{name} leaves the box")
        if abs(ks.residual(x)) > self.feas_rtol * ks.feasibility_scale(x):
            self._fail(k, f"{name} violates a.x = b by {ks.residual(x):.3e}")

    def __call__(self, info) -> None:
        k, cfg = info.k, self.cfg
        self.steps += 1
        self._feasible(k, info.x, "x")
        self._feasible(k, info.x_new, "x_new")

        for name, alpha in (("alpha", info.alpha_bar), ("next alpha", info.cbb_after.alpha_bar)):
            if not cfg.step_min <= alpha <= cfg.step_max:
                self._fail(k, f"{name} {alpha} outside the safeguard interval")

        # descent bound of the spectral projected gradient direction
        dd = float(info.d @ info.d)
        slack = 1e-9 * float(np.linalg.norm(info.g) * np.sqrt(dd)) + 1e-300
        if not info.gtd <= -dd / info.alpha_bar + slack:
            self._fail(k, f"g.d = {info.gtd:.3e} > -|d|^2/alpha = {-dd / info.alpha_bar:.3e}")
        # the plain product also carries the rounding of a.d times the multiplier
        raw = float(info.g @ info.d)
        moving = info.d != 0
        a_m = self.kset.a[moving]
        nu = float(a_m @ info.g[moving]) / float(a_m @ a_m) if np.any(moving) else 0.0
        raw_slack = abs(nu * float(self.kset.a @ info.d)) + 1e-14 * float(np.abs(info.g) @ np.abs(info.d))
        if not raw <= -dd / info.alpha_bar + slack + raw_slack:
            self._fail(k, f"raw g.d = {raw:.3e} breaks the descent bound")

        # acceptance test and its precondition
        if info.f > info.f_ref:
            self._fail(k, f"f = {info.f!r} above the acceptance level {info.f_ref!r}")
        bound = info.f_ref + info.beta * cfg.sufficient_decrease * info.gtd
        if not info.f_new <= bound:
            self._fail(k, f"accepted f = {info.f_new!r} > {bound!r}")
        if not (0 < info.beta <= 1):
            self._fail(k, f"beta = {info.beta}")

        # reference counters
        ref, after = info.reference, info.reference_after
        a_expected = ref.a + 1 if info.beta == 1.0 else 0
        if after.a != a_expected:
            self._fail(k, f"unit-step counter {after.a}, expected {a_expected}")
        if info.f_new <= ref.f_min - ref.decrease_tol:
            l_expected = 0
        else:
            l_expected = ref.l + 1
        if after.l != l_expected:
            self._fail(k, f"decrease counter {after.l}, expected {l_expected}")
        if after.l > cfg.reset_period:
            self._fail(k, f"decrease counter {after.l} exceeds the reset period")
        if after.f_max != max(after.recent) or len(after.recent) > cfg.window:
            self._fail(k, "window bookkeeping broken")

        # reuse counter
        j0, j1 = info.cbb.j, info.cbb_after.j
        allowed = {0, j0 + 1} if info.beta == 1.0 else {0, j0}
        if j1 not in allowed:
            self._fail(k, f"reuse counter went {j0} -> {j1}")

    def assert_ok(self, require_steps: bool = True):
        assert self.steps > 0 or not require_steps, "callback never invoked"
        assert not self.failures, "\n".join(self.failures[:20])
