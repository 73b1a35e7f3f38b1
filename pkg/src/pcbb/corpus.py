"""Synthetic strongly convex quadratic instances and an exhaustive oracle.

The oracle enumerates every assignment of the components to
{lower bound, upper bound, free}, solves the equality-constrained KKT system
of each and keeps the assignment whose multipliers have the right signs. It
costs ``3^n`` small solves and is meant for ``n <= 8``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .projection import KnapsackSet


@dataclass(frozen=True, eq=False)
class QuadraticInstance:
    """``min 1/2 x'Qx - q'x`` over ``kset``."""

    Q: np.ndarray
    q: np.ndarray
    kset: KnapsackSet

    def __call__(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        Qx = self.Q @ x
        return 0.5 * float(x @ Qx) - float(self.q @ x), Qx - self.q

    def value(self, x: np.ndarray) -> float:
        # same arithmetic as __call__ so both report bit-identical values
        return self(x)[0]

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self(x)

    @property
    def n(self) -> int:
        return self.q.size


def random_knapsack(n: int, rng: np.random.Generator) -> KnapsackSet:
    a = rng.uniform(0.2, 3.0, n)
    l = rng.uniform(-2.0, 0.5, n)
    u = l + rng.uniform(0.1, 2.5, n)
    level = rng.uniform(0.05, 0.95)
    b = float(a @ (l + level * (u - l)))
    return KnapsackSet(a, b, l, u)


def random_quadratic(n: int, rng: np.random.Generator, cond: float = 50.0) -> QuadraticInstance:
    """Instance with Hessian eigenvalues spread log-uniformly over ``[1, cond]``."""
    V, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    Q = (V * eig) @ V.T
    Q = 0.5 * (Q + Q.T)
    q = rng.normal(scale=3.0, size=n)
    return QuadraticInstance(Q, q, random_knapsack(n, rng))


def quadratic_corpus(count: int, seed: int, max_n: int = 6, min_n: int = 2) -> list[QuadraticInstance]:
    rng = np.random.default_rng(seed)
    return [random_quadratic(int(rng.integers(min_n, max_n + 1)), rng) for _ in range(count)]


def active_set_oracle(Q: np.ndarray, q: np.ndarray, kset: KnapsackSet, tol: float = 1e-9) -> np.ndarray:
    """Global minimiser of a strictly convex QP over ``kset`` by enumeration."""
    n = q.size
    a, l, u, b = kset.a, kset.l, kset.u, kset.b
    best, best_f = None, np.inf
    for states in itertools.product((2, 0, 1), repeat=n):
        st = np.array(states)
        free = st == 2
        x = np.where(st == 0, l, u)
        if np.any(free):
            F = np.flatnonzero(free)
            B = np.flatnonzero(~free)
            m = F.size
            K = np.zeros((m + 1, m + 1))
            K[:m, :m] = Q[np.ix_(F, F)]
            K[:m, m] = a[F]
            K[m, :m] = a[F]
            rhs = np.empty(m + 1)
            rhs[:m] = q[F] - Q[np.ix_(F, B)] @ x[B]
            rhs[m] = b - a[B] @ x[B]
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x[F] = sol[:m]
            nu = sol[m]
            if np.any(x[F] < l[F] - tol) or np.any(x[F] > u[F] + tol):
                continue
            r = Q @ x - q + nu * a
            if np.any(r[st == 0] < -tol) or np.any(r[st == 1] > tol):
                continue
        else:
            if abs(a @ x - b) > tol * (1 + abs(b)):
                continue
            # any multiplier nu with grad_i + nu a_i >= 0 at lower, <= 0 at upper
            ratio = -(Q @ x - q) / a
            lo = ratio[st == 0].max(initial=-np.inf)
            hi = ratio[st == 1].min(initial=np.inf)
            if lo > hi + tol:
                continue
        x = np.clip(x, l, u)
        fx = 0.5 * x @ Q @ x - q @ x
        if fx < best_f:
            best, best_f = x, fx
    if best is None:
        raise RuntimeError("no KKT point found")
    return best
