"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import numpy as np


def breakpoint_projection(x, a, b, l, u):
    """Projection onto ``{a.z = b, l <= z <= u}`` by enumerating dual breakpoints.

    The dual residual is piecewise linear between the ``2n`` breakpoints, so
    its root is found by evaluating it at every breakpoint, locating the sign
    change and interpolating on that piece.
    """
    x, a, l, u = (np.asarray(v, dtype=float) for v in (x, a, l, u))

    def resid(lam):
        return float(np.dot(a, np.minimum(np.maximum(x - lam * a, l), u))) - b

    knots = np.sort(np.concatenate([(x - l) / a, (x - u) / a]))
    vals = np.array([resid(t) for t in knots])
    zero = np.flatnonzero(vals == 0.0)
    if zero.size:
        lam = knots[zero[0]]
    else:
        # residual is non-increasing: first knot where it drops below zero
        i = int(np.argmax(vals < 0))
        t0, t1, g0, g1 = knots[i - 1], knots[i], vals[i - 1], vals[i]
        lam = t0 + g0 * (t1 - t0) / (g0 - g1)
    return np.minimum(np.maximum(x - lam * a, l), u)


def bisection_root(f, lo, hi, tol=1e-15, maxiter=400):
    flo = f(lo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < tol:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def qp_kkt_residual(Q, q, kset, x):
    """Largest violation of the KKT conditions of ``min 1/2 x'Qx - q'x`` over ``kset``.

    The multiplier is fitted by least squares on the strictly interior
    components (or taken from the feasible interval when none is interior).
    """
    g = Q @ x - q
    a, l, u = kset.a, kset.l, kset.u
    scale = 1e-9 * (1 + np.abs(x))
    at_l = x <= l + scale
    at_u = x >= u - scale
    free = ~(at_l | at_u)
    if np.any(free):
        nu = -float(g[free] @ a[free]) / float(a[free] @ a[free])
    else:
        ratio = -g / a
        lo = ratio[at_l].max(initial=-np.inf)
        hi = ratio[at_u].min(initial=np.inf)
        nu = lo if np.isfinite(lo) else hi
    r = g + nu * a
    viol = np.zeros_like(x)
    viol[free] = np.abs(r[free])
    viol[at_l & ~at_u] = np.maximum(-r[at_l & ~at_u], 0)
    viol[at_u & ~at_l] = np.maximum(r[at_u & ~at_l], 0)
    return max(float(viol.max()), abs(kset.residual(x)))


def central_difference(fun, w, dw, t=1e-6):
    return (fun(w + t * dw) - fun(w - t * dw)) / (2 * t)
