"""Two-material heat-conduction design on the unit square or cube.

State equation ``-div(k(w) grad theta) = f`` with Dirichlet data ``theta0``,
discretised by cell-centred finite volumes on a uniform ``N^dim`` grid:

* face conductivity is the harmonic mean of the two adjacent cells;
* a boundary face couples its cell to ``theta0`` over the half-cell distance;
* the objective ``1/2 int |grad theta|^2`` is the matching face-based sum of
  squared difference quotients, i.e. ``1/2 (theta - theta0)`` measured in the
  unit-conductivity operator.

Gradients are exact derivatives of this discrete objective, obtained from one
adjoint solve with the (symmetric) state operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Union

import numpy as np
import scipy.sparse as sp

from .projection import KnapsackSet

Load = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


class ConvergenceError(RuntimeError):
    """PCG did not reach the requested tolerance."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``N^dim`` cells on ``[0, 1]^dim``; cells indexed in C order."""

    dim: int
    N: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.N < 1:
            raise ValueError("N must be positive")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.dim

    @property
    def n(self) -> int:
        return self.N**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(n, dim)``."""
        c = (np.arange(self.N) + 0.5) * self.h
        mesh = np.meshgrid(*([c] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


class _Stencil:
    """Face connectivity of a grid; independent of the conductivities."""

    def __init__(self, grid: Grid):
        idx = np.arange(grid.n).reshape(grid.shape)
        left, right, bcell, bcoord = [], [], [], []
        centers = grid.centers()
        for ax in range(grid.dim):
            left.append(np.take(idx, np.arange(grid.N - 1), axis=ax).ravel())
            right.append(np.take(idx, np.arange(1, grid.N), axis=ax).ravel())
            for end, pos in ((0, 0.0), (grid.N - 1, 1.0)):
                cells = np.take(idx, [end], axis=ax).ravel()
                xy = centers[cells].copy()
                xy[:, ax] = pos
                bcell.append(cells)
                bcoord.append(xy)
        self.left = np.concatenate(left)
        self.right = np.concatenate(right)
        self.bcell = np.concatenate(bcell)
        self.bcoord = np.concatenate(bcoord)
        self.n = grid.n
        # face area / centre distance: h^(dim-1) / h
        self.geom = grid.h ** (grid.dim - 2)

    def _sum(self, cells, values):
        return np.bincount(cells, weights=values, minlength=self.n)


@dataclass(frozen=True, eq=False)
class HeatProblem:
    """Design problem data.

    ``load`` and ``theta0`` may be constants, arrays (per cell, resp. per
    boundary face) or callables of the coordinates, shape ``(m, dim)``.
    """

    grid: Grid
    k_alpha: float = 1.0
    k_beta: float = 2.0
    p: float = 1.0
    load: Load = 1.0
    volume_fraction: float = 0.4
    theta0: Load = 0.0
    stencil: _Stencil = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.k_alpha <= self.k_beta:
            raise ValueError("need 0 < k_alpha <= k_beta")
        if self.p < 1:
            raise ValueError("penalization p must be >= 1")
        if not 0 < self.volume_fraction < 1:
            raise ValueError("volume fraction must lie in (0, 1)")
        object.__setattr__(self, "stencil", _Stencil(self.grid))

    @property
    def n(self) -> int:
        return self.grid.n

    @cached_property
    def load_vector(self) -> np.ndarray:
        """Cell-integrated load ``f_i h^dim``."""
        return _sample(self.load, self.grid.centers(), self.n) * self.grid.cell_volume

    @cached_property
    def boundary_values(self) -> np.ndarray:
        st = self.stencil
        return _sample(self.theta0, st.bcoord, st.bcell.size)

    def feasible_set(self) -> KnapsackSet:
        """``{w in [0,1]^n : sum_i h^dim w_i = R}``."""
        return KnapsackSet.volume(self.n, self.volume_fraction, self.grid.cell_volume)

    def initial_design(self) -> np.ndarray:
        return np.full(self.n, self.volume_fraction)


def _sample(spec, coords, size):
    if callable(spec):
        vals = np.asarray(spec(coords), dtype=float)
    else:
        vals = np.asarray(spec, dtype=float)
    return np.broadcast_to(vals, (size,)).astype(float)


class StateFields(NamedTuple):
    theta: np.ndarray
    eta: np.ndarray
    k_cell: np.ndarray


def interpolate_conductivity(w: np.ndarray, prob: HeatProblem) -> np.ndarray:
    """``k = w^p k_beta + (1 - w^p) k_alpha``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (prob.n,):
        raise ValueError(f"design must have length {prob.n}")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("design values must lie in [0, 1]")
    wp = w**prob.p
    return wp * prob.k_beta + (1.0 - wp) * prob.k_alpha


def _face_conductivity(k, st):
    kl, kr = k[st.left], k[st.right]
    return 2.0 * kl * kr / (kl + kr)


def assemble(k_cell: np.ndarray, prob: HeatProblem) -> tuple[sp.csr_matrix, np.ndarray]:
    """FVM matrix and right-hand side for conductivities ``k_cell``."""
    k = np.asarray(k_cell, dtype=float)
    if np.any(k <= 0):
        raise ValueError("conductivities must be positive")
    st = prob.stencil
    t_in = st.geom * _face_conductivity(k, st)
    t_bd = 2.0 * st.geom * k[st.bcell]
    diag = st._sum(st.left, t_in) + st._sum(st.right, t_in) + st._sum(st.bcell, t_bd)
    rows = np.concatenate([st.left, st.right, np.arange(st.n)])
    cols = np.concatenate([st.right, st.left, np.arange(st.n)])
    data = np.concatenate([-t_in, -t_in, diag])
    A = sp.csr_matrix((data, (rows, cols)), shape=(st.n, st.n))
    rhs = prob.load_vector + st._sum(st.bcell, t_bd * prob.boundary_values)
    return A, rhs


def pcg(A, b: np.ndarray, tol: float = 1e-12, maxiter: int | None = None) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients from a zero initial guess.

    Stops when ``||b - A x|| <= tol ||b||``.
    """
    n = b.size
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    x = np.zeros(n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0
    inv_diag = 1.0 / A.diagonal()
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not pAp > 0:
            raise ConvergenceError("matrix is not positive definite")
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = inv_diag * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise ConvergenceError(f"PCG reached {maxiter} iterations; residual {np.linalg.norm(r) / bnorm:.2e}")


def assemble_and_solve_state(k_cell: np.ndarray, prob: HeatProblem, tol: float = 1e-12) -> np.ndarray:
    A, rhs = assemble(k_cell, prob)
    theta, _ = pcg(A, rhs, tol)
    return theta


def objective_value(theta: np.ndarray, prob: HeatProblem) -> float:
    """Discrete ``1/2 int |grad theta|^2``."""
    st = prob.stencil
    diff = theta[st.left] - theta[st.right]
    bdiff = theta[st.bcell] - prob.boundary_values
    return 0.5 * st.geom * (float(diff @ diff) + 2.0 * float(bdiff @ bdiff))


def objective_state_derivative(theta: np.ndarray, prob: HeatProblem) -> np.ndarray:
    """``dJ/dtheta``: the unit-conductivity operator applied to ``theta - theta0``."""
    st = prob.stencil
    flux = st.geom * (theta[st.left] - theta[st.right])
    bflux = 2.0 * st.geom * (theta[st.bcell] - prob.boundary_values)
    return st._sum(st.left, flux) - st._sum(st.right, flux) + st._sum(st.bcell, bflux)


def solve_adjoint(k_cell: np.ndarray, theta: np.ndarray, prob: HeatProblem, tol: float = 1e-12) -> np.ndarray:
    A, _ = assemble(k_cell, prob)
    eta, _ = pcg(A, objective_state_derivative(theta, prob), tol)
    return eta


def conductivity_gradient(k_cell: np.ndarray, theta: np.ndarray, eta: np.ndarray, prob: HeatProblem) -> np.ndarray:
    """``dJ/dk`` per cell: minus the adjoint contraction of ``dA/dk_i theta - drhs/dk_i``."""
    st = prob.stencil
    k = np.asarray(k_cell, dtype=float)
    kl, kr = k[st.left], k[st.right]
    ksum2 = (kl + kr) ** 2
    prod = (eta[st.left] - eta[st.right]) * (theta[st.left] - theta[st.right])
    bprod = eta[st.bcell] * (theta[st.bcell] - prob.boundary_values)
    dk = (
        st._sum(st.left, 2.0 * kr**2 / ksum2 * prod)
        + st._sum(st.right, 2.0 * kl**2 / ksum2 * prod)
        + st._sum(st.bcell, 2.0 * bprod)
    )
    return -st.geom * dk


def design_gradient(w: np.ndarray, theta: np.ndarray, eta: np.ndarray, prob: HeatProblem) -> np.ndarray:
    """``dJ/dw`` per cell, the chain rule through ``k(w)``."""
    k_cell = interpolate_conductivity(w, prob)
    dk_dw = prob.p * np.power(w, prob.p - 1.0) * (prob.k_beta - prob.k_alpha)
    return conductivity_gradient(k_cell, theta, eta, prob) * dk_dw


class HeatObjective:
    """Objective evaluator ``w -> (J(w), dJ/dw)`` for the PCBB solver.

    Remembers the last state so that asking for the gradient at the point
    most recently passed to :meth:`value` costs only the adjoint solve. Not
    safe for concurrent use.
    """

    def __init__(self, prob: HeatProblem, tol: float = 1e-12):
        self.prob = prob
        self.tol = tol
        self.state_solves = 0
        self.adjoint_solves = 0
        self._w = None
        self._state = None

    def _forward(self, w):
        w = np.asarray(w, dtype=float)
        if self._w is not None and np.array_equal(w, self._w):
            return self._state
        k_cell = interpolate_conductivity(w, self.prob)
        theta = assemble_and_solve_state(k_cell, self.prob, self.tol)
        self.state_solves += 1
        self._w = w.copy()
        self._state = (k_cell, theta, objective_value(theta, self.prob))
        return self._state

    def value(self, w: np.ndarray) -> float:
        return self._forward(w)[2]

    def state(self, w: np.ndarray) -> StateFields:
        k_cell, theta, _ = self._forward(w)
        eta = solve_adjoint(k_cell, theta, self.prob, self.tol)
        self.adjoint_solves += 1
        return StateFields(theta, eta, k_cell)

    def value_and_grad(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        k_cell, theta, J = self._forward(w)
        eta = solve_adjoint(k_cell, theta, self.prob, self.tol)
        self.adjoint_solves += 1
        return J, design_gradient(w, theta, eta, self.prob)

    __call__ = value_and_grad


def make_objective(prob: HeatProblem, tol: float = 1e-12) -> HeatObjective:
    return HeatObjective(prob, tol)


def manufactured_problem(N: int, dim: int = 2) -> tuple[HeatProblem, np.ndarray]:
    """Unit-conductivity problem with exact solution ``prod_d sin(pi x_d)``.

    Returns the problem and the exact solution sampled at cell centres.
    """
    grid = Grid(dim, N)

    def exact(x):
        return np.prod(np.sin(math.pi * x), axis=1)

    prob = HeatProblem(
        grid,
        k_alpha=1.0,
        k_beta=1.0,
        load=lambda x: dim * math.pi**2 * exact(x),
        theta0=0.0,
    )
    return prob, exact(grid.centers())
