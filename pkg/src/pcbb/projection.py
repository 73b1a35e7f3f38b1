"""Euclidean projection onto ``{x : a.x = b, l <= x <= u}``.

For fixed multiplier ``lam`` the box-constrained Lagrangian is minimised by
``z(lam) = clip(x - lam * a, l, u)``, so the projection reduces to the root of
the scalar, piecewise linear, non-increasing residual
``g(lam) = a.z(lam) - b``. The root is bracketed by the extreme breakpoints,
located with Brent's method and then recomputed exactly on the linear piece
that contains it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

_EPS = np.finfo(float).eps
_REPAIR_RTOL = 64 * _EPS


class EmptySetError(ValueError):
    """The knapsack set has no feasible point."""


class BracketError(ValueError):
    """No sign change, or a non-finite value, inside a root bracket."""


@dataclass(frozen=True, eq=False)
class KnapsackSet:
    """The set ``{x : a.x = b, l <= x <= u}`` with positive weights ``a``."""

    a: np.ndarray
    b: float
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        lo = np.broadcast_to(np.asarray(self.l, dtype=float), a.shape).copy()
        hi = np.broadcast_to(np.asarray(self.u, dtype=float), a.shape).copy()
        for arr in (a, lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "l", lo)
        object.__setattr__(self, "u", hi)
        object.__setattr__(self, "b", float(self.b))

        if a.size == 0:
            raise ValueError("empty weight vector")
        if not np.all(a > 0):
            raise ValueError("weights a must be strictly positive")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and math.isfinite(self.b)):
            raise ValueError("bounds and level must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if self.lower_level > self.b or self.upper_level < self.b:
            raise EmptySetError(
                f"a.l = {self.lower_level!r}, a.u = {self.upper_level!r} do not enclose b = {self.b!r}"
            )

    @classmethod
    def volume(cls, n: int, fraction: float, cell_volume: float | None = None) -> "KnapsackSet":
        """Uniform-weight set ``{w in [0,1]^n : sum(h*w) = fraction * n*h}``."""
        h = 1.0 / n if cell_volume is None else cell_volume
        return cls(np.full(n, h), fraction * n * h, np.zeros(n), np.ones(n))

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def lower_level(self) -> float:
        return float(self.a @ self.l)

    @property
    def upper_level(self) -> float:
        return float(self.a @ self.u)

    def residual(self, x: np.ndarray) -> float:
        return float(self.a @ x) - self.b

    def feasibility_scale(self, x: np.ndarray) -> float:
        """``||a|| ||x|| + |b|``, the natural scale of ``a.x - b`` rounding errors."""
        return float(np.linalg.norm(self.a) * np.linalg.norm(x)) + abs(self.b)

    def contains(self, x: np.ndarray, rtol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.a.shape:
            return False
        in_box = bool(np.all(x >= self.l) and np.all(x <= self.u))
        return in_box and abs(self.residual(x)) <= rtol * self.feasibility_scale(x)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.a.shape:
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x


@dataclass(frozen=True)
class DualBracket:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not self.lambda_min <= self.lambda_max:
            raise ValueError("lambda_min must not exceed lambda_max")

    @property
    def width(self) -> float:
        return self.lambda_max - self.lambda_min


class BrentInfo(NamedTuple):
    root: float
    iterations: int
    evaluations: int
    bracket: DualBracket


class ProjectionInfo(NamedTuple):
    multiplier: float
    iterations: int
    evaluations: int


def z_of_lambda(lam: float, x: np.ndarray, kset: KnapsackSet) -> np.ndarray:
    """Minimiser of the box-constrained Lagrangian for multiplier ``lam``."""
    x = kset._check(x)
    return np.clip(x - lam * kset.a, kset.l, kset.u)


def dual_residual(lam: float, x: np.ndarray, kset: KnapsackSet) -> float:
    return float(kset.a @ z_of_lambda(lam, x, kset)) - kset.b


def dual_bracket(x: np.ndarray, kset: KnapsackSet) -> DualBracket:
    """Interval between the extreme breakpoints of the dual residual.

    Below every upper breakpoint all components sit at ``u`` (residual
    ``a.u - b >= 0``), above every lower breakpoint they sit at ``l``
    (residual ``a.l - b <= 0``), so the interval always contains the root.
    """
    x = kset._check(x)
    lam_u = (x - kset.u) / kset.a
    lam_l = (x - kset.l) / kset.a
    return DualBracket(float(lam_u.min()), float(lam_l.max()))


def brent_root(
    f: Callable[[float], float],
    bracket: DualBracket | tuple[float, float],
    tol: float = 1e-14,
    maxiter: int = 500,
    full_output: bool = False,
):
    """Find a zero of ``f`` inside ``bracket`` by Brent's method.

    Combines inverse quadratic interpolation and secant steps with bisection
    and stops when ``f`` vanishes exactly or the bracket is narrower than
    ``tol * max(1, |root|)``. A bisection is forced whenever two consecutive
    steps fail to halve the bracket, so the iteration count stays within a
    small constant of the bisection count.

    With ``full_output`` a :class:`BrentInfo` is returned, whose ``bracket``
    is the final sign-change interval.
    """
    if isinstance(bracket, DualBracket):
        a, b = bracket.lambda_min, bracket.lambda_max
    else:
        a, b = map(float, bracket)
    fa, fb = f(a), f(b)
    nfev = 2
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise BracketError("non-finite function value at the bracket ends")
    if fa * fb > 0:
        raise BracketError(f"no sign change on [{a}, {b}]: f = {fa}, {fb}")

    def done(root, it, lo, hi):
        if not full_output:
            return root
        return BrentInfo(root, it, nfev, DualBracket(min(lo, hi), max(lo, hi)))

    if fa == 0:
        return done(a, 0, a, a)
    if fb == 0:
        return done(b, 0, b, b)

    c, fc = a, fa
    d = e = b - a
    widths = [math.inf, math.inf]
    for it in range(1, maxiter + 1):
        if fb * fc > 0:
            # keep the root between b and c
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * _EPS * abs(b) + 0.5 * tol * max(1.0, abs(b))
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0:
            return done(b, it - 1, b, c)

        stalled = abs(c - b) > 0.5 * widths[-2]
        widths.append(abs(c - b))
        if not stalled and abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * xm * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            p = abs(p)
            if 2.0 * p < min(3.0 * xm * q - abs(tol1 * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = xm
        else:
            d = e = xm
        a, fa = b, fb
        b = b + d if abs(d) > tol1 else b + math.copysign(tol1, xm)
        fb = f(b)
        nfev += 1
        if not math.isfinite(fb):
            raise BracketError(f"non-finite function value at {b}")
    raise RuntimeError(f"Brent iteration did not converge in {maxiter} steps")


class _Dual:
    """Dual residual with preallocated scratch, for repeated evaluation."""

    def __init__(self, x: np.ndarray, kset: KnapsackSet):
        self.x = x
        self.kset = kset
        self.buf = np.empty_like(x)

    def z(self, lam: float, out: np.ndarray | None = None) -> np.ndarray:
        out = self.buf if out is None else out
        np.multiply(self.kset.a, -lam, out=out)
        out += self.x
        np.clip(out, self.kset.l, self.kset.u, out=out)
        return out

    def __call__(self, lam: float) -> float:
        return float(self.kset.a @ self.z(lam)) - self.kset.b


def _exact_multiplier(dual: _Dual, lo: float, hi: float, lam_l, lam_u) -> float:
    """Solve the residual exactly on the linear piece holding the root in [lo, hi]."""
    if lo < hi:
        inner = np.concatenate([lam_l[(lam_l > lo) & (lam_l < hi)], lam_u[(lam_u > lo) & (lam_u < hi)]])
        if inner.size:
            # narrow to a single linear piece; residual is non-increasing
            knots = np.unique(np.concatenate([[lo], inner, [hi]]))
            vals = [dual(t) for t in knots]
            for t0, t1, g0, g1 in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
                if g0 >= 0 >= g1:
                    lo, hi = t0, t1
                    break
    kset = dual.kset
    lam_mid = 0.5 * (lo + hi)
    free = (lam_u <= lam_mid) & (lam_l >= lam_mid)
    denom = float(kset.a[free] @ kset.a[free])
    if denom == 0.0:
        return lam_mid
    upper = lam_u > lam_mid
    lower = lam_l < lam_mid
    fixed = float(kset.a[upper] @ kset.u[upper]) + float(kset.a[lower] @ kset.l[lower])
    return (float(kset.a[free] @ dual.x[free]) + fixed - kset.b) / denom


def _robust_bracket(dual: _Dual, lo: float, hi: float) -> DualBracket:
    """Extreme breakpoints, pushed outwards while rounding in ``x - lam a`` spoils the sign."""
    step = 4 * _EPS
    for _ in range(60):
        if dual(lo) >= 0:
            break
        lo -= step * max(abs(lo), 1.0)
        step *= 2
    step = 4 * _EPS
    for _ in range(60):
        if dual(hi) <= 0:
            break
        hi += step * max(abs(hi), 1.0)
        step *= 2
    return DualBracket(lo, hi)


def _fill_by_breakpoints(x: np.ndarray, kset: KnapsackSet) -> np.ndarray:
    """Projection in the regime where ``x`` dwarfs the box widths.

    Each component is free only on a multiplier interval of width
    ``(u_i - l_i) / a_i``, far below the float spacing of the multiplier,
    so no float multiplier reproduces the projection. The breakpoints are
    still reliable: lowering the multiplier moves components from ``l`` to
    ``u`` in order of their breakpoints, which fixes the result up to one
    partially filled component.
    """
    mid = 0.5 * ((x - kset.l) + (x - kset.u)) / kset.a
    order = np.argsort(-mid, kind="stable")
    caps = (kset.a * (kset.u - kset.l))[order]
    need = kset.b - kset.lower_level
    filled = np.cumsum(caps)
    k = min(int(np.searchsorted(filled, need)), kset.n - 1)
    y = kset.l.copy()
    y[order[:k]] = kset.u[order[:k]]
    i = order[k]
    partial = need - (filled[k - 1] if k > 0 else 0.0)
    y[i] = min(max(kset.l[i] + partial / kset.a[i], kset.l[i]), kset.u[i])
    return y


def project(x: np.ndarray, kset: KnapsackSet, tol: float = 1e-14, full_output: bool = False):
    """Euclidean projection of ``x`` onto ``kset``.

    The result lies in the box exactly and satisfies the linear constraint up
    to rounding in ``a.y``. Inputs of huge magnitude (far beyond the bounds,
    as produced by very large trial steps) lose their free components to
    cancellation; the result is then assembled from the breakpoint order.
    """
    x = kset._check(x)
    if kset.lower_level == kset.b:
        y, info = kset.l.copy(), ProjectionInfo(math.inf, 0, 0)
        return (y, info) if full_output else y
    if kset.upper_level == kset.b:
        y, info = kset.u.copy(), ProjectionInfo(-math.inf, 0, 0)
        return (y, info) if full_output else y

    lam_u = (x - kset.u) / kset.a
    lam_l = (x - kset.l) / kset.a
    dual = _Dual(x, kset)
    br = _robust_bracket(dual, float(lam_u.min()), float(lam_l.max()))
    if br.width == 0:
        lam, it, nfev = br.lambda_min, 0, 0
    else:
        root, it, nfev, fin = brent_root(dual, br, tol=tol, full_output=True)
        lam = _exact_multiplier(dual, fin.lambda_min, fin.lambda_max, lam_l, lam_u)
        if not fin.lambda_min <= lam <= fin.lambda_max:
            lam = root

    y = dual.z(lam, out=np.empty_like(x))
    # Polish on the free components. The shift is applied to y, not
    # recomputed from x, so its rounding scales with |y| rather than |x|.
    r = float(kset.a @ y) - kset.b
    for _ in range(3):
        if r == 0.0:
            break
        free = (y > kset.l) & (y < kset.u)
        denom = float(kset.a[free] @ kset.a[free])
        if denom == 0:
            break
        y2 = y.copy()
        y2[free] -= (r / denom) * kset.a[free]
        np.clip(y2, kset.l, kset.u, out=y2)
        r2 = float(kset.a @ y2) - kset.b
        if not abs(r2) < abs(r):
            break
        y, r, lam = y2, r2, lam + r / denom
    if abs(float(kset.a @ y) - kset.b) > _REPAIR_RTOL * kset.feasibility_scale(y):
        y = _fill_by_breakpoints(x, kset)
    if full_output:
        return y, ProjectionInfo(lam, it, nfev)
    return y
