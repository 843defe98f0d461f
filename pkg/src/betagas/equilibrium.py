"""Equilibrium measures of the logarithmic energy on a uniform grid.

The measure minimizing

    I(mu) = int V dmu + beta/2 * int int log|s - t|^-1 dmu(s) dmu(t)

is approximated by cell weights ``w`` minimizing ``<V, w> + beta/2 <w, K w>`` over
the probability simplex, where ``K`` holds cell-averaged values of
``-log|s - t|``.  A solution is certified by its Euler-Lagrange residual: the
effective potential ``F = V + beta K w`` must be constant on the support and
no smaller off it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .model import ExternalField, GridMeasure, InteractionPotential, convolve

log = logging.getLogger(__name__)


class EquilibriumError(RuntimeError):
    """The solver did not reach its tolerance."""

    def __init__(self, message, residual=math.nan):
        super().__init__(message)
        self.residual = residual


class WindowTooSmallError(EquilibriumError):
    """The solved measure puts mass at the edge of the grid window."""


class NonContractionError(EquilibriumError):
    """The self-consistent iteration stopped contracting."""


@lru_cache(maxsize=8)
def _toeplitz_log(n_cells: int) -> np.ndarray:
    idx = np.arange(n_cells)
    d = np.abs(idx[:, None] - idx[None, :]).astype(float)
    with np.errstate(divide="ignore"):
        K0 = -np.log(d)
    # exact cell average of -log|u| over one cell, in units of the cell width: 1 - log(1/2)
    np.fill_diagonal(K0, 1.0 + math.log(2.0))
    K0.setflags(write=False)
    return K0


def log_kernel(n_cells: int, dx: float) -> np.ndarray:
    """Matrix of ``-log|t_c - t_c'|`` at midpoints, with the diagonal ``1 - log(dx/2)``."""
    return _toeplitz_log(n_cells) - math.log(dx)


@dataclass
class EquilibriumProblem:
    """External field values ``V`` at the cell midpoints of ``[left, right]``.

    ``field`` (optional) is the callable behind ``V``; it lets the solver widen
    the window when the solution reaches the edge.
    """

    V: np.ndarray
    beta: float
    left: float
    right: float
    n_cells: int
    field: Callable | None = None

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        if self.V.shape != (self.n_cells,):
            raise ValueError("V must have one value per cell")
        if not np.all(np.isfinite(self.V)):
            raise ValueError("V must be finite on the grid")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.n_cells < 64:
            raise ValueError("n_cells must be at least 64")

    @classmethod
    def from_field(cls, V: Callable, beta: float, left: float, right: float, n_cells: int = 1024):
        mids = left + (np.arange(n_cells) + 0.5) * (right - left) / n_cells
        return cls(np.asarray(V(mids), dtype=float), beta, left, right, n_cells, V)

    @property
    def dx(self) -> float:
        return (self.right - self.left) / self.n_cells

    @property
    def midpoints(self) -> np.ndarray:
        return self.left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def log_kernel(self) -> np.ndarray:
        return log_kernel(self.n_cells, self.dx)

    def enlarged(self, factor: float = 1.5) -> EquilibriumProblem:
        if self.field is None:
            raise WindowTooSmallError("solution touches the window edge and V has no callable to re-evaluate")
        c, half = 0.5 * (self.left + self.right), 0.5 * factor * (self.right - self.left)
        return EquilibriumProblem.from_field(self.field, self.beta, c - half, c + half, self.n_cells)


@dataclass
class EquilibriumSolution:
    mu: GridMeasure
    effective_potential: np.ndarray
    lagrange_constant: float
    el_residual: float
    iterations: int
    objective: float = math.nan
    objective_history: list = field(default_factory=list, repr=False)
    V: np.ndarray | None = field(default=None, repr=False)
    beta: float = math.nan
    self_consistency_residual: float | None = None
    contraction_history: list = field(default_factory=list, repr=False)

    @property
    def support(self) -> tuple[float, float]:
        return self.mu.support()


def discrete_energy(w, V, K, beta) -> float:
    return float(V @ w + 0.5 * beta * (w @ (K @ w)))


def _el_metrics(w, F, threshold):
    supp = w > threshold
    lam = float(np.dot(w, F)) if supp.any() else float(np.min(F))
    on = float(np.max(np.abs(F[supp] - lam))) if supp.any() else 0.0
    off = float(np.max(np.maximum(0.0, lam - F[~supp]))) if (~supp).any() else 0.0
    return on + off, lam


def euler_lagrange_residual(mu: GridMeasure, V, beta: float, support_threshold: float = 0.0):
    """Deviation of ``F = V + beta K w`` from the equilibrium conditions.

    Returns ``(residual, lagrange_constant)`` with residual
    ``max_supp |F - lam| + max_off max(0, lam - F)``.
    """
    V = np.asarray(V, dtype=float)
    K = log_kernel(mu.n_cells, mu.dx)
    F = V + beta * (K @ mu.weights)
    return _el_metrics(mu.weights, F, support_threshold)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.flatnonzero(u - css / ind > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _projected_gradient(w, V, K, beta, iters, history, tol):
    """Projected gradient with Armijo backtracking along the projection arc."""
    g = V + beta * (K @ w)
    J = discrete_energy(w, V, K, beta)
    step = 1.0 / (beta * float(np.max(np.abs(K).sum(axis=1))))
    for _ in range(iters):
        while True:
            w_new = _project_simplex(w - step * g)
            d = w_new - w
            J_new = discrete_energy(w_new, V, K, beta)
            if J_new <= J + 1e-4 * float(g @ d) or step < 1e-16:
                break
            step *= 0.5
        g_new = V + beta * (K @ w_new)
        dg = g_new - g
        w, g, J = w_new, g_new, min(J_new, J)
        history.append(J)
        if _el_metrics(w, g, 0.0)[0] <= tol:
            break
        # Barzilai-Borwein guess for the next trial step
        dd = float(d @ dg)
        step = float(d @ d) / dd if dd > 0 else 2.0 * step
    return w


def _active_set(w, V, K, beta, tol, max_iter, history):
    """Primal active-set iterations on faces of the simplex; keeps ``w`` feasible."""
    n = len(w)
    free = w > 0
    for it in range(max_iter):
        S = np.flatnonzero(free)
        m = len(S)
        A = np.empty((m + 1, m + 1))
        A[:m, :m] = beta * K[np.ix_(S, S)]
        A[:m, m] = -1.0
        A[m, :m] = 1.0
        A[m, m] = 0.0
        rhs = np.concatenate([-V[S], [1.0]])
        sol = np.linalg.solve(A, rhs)
        v = sol[:m]
        if np.all(v >= 0):
            w = np.zeros(n)
            w[S] = v
            w /= w.sum()
            history.append(discrete_energy(w, V, K, beta))
            F = V + beta * (K @ w)
            lam = float(sol[m])
            viol = np.flatnonzero(~free & (F < lam - 0.1 * tol))
            if len(viol) == 0:
                return w, it + 1
            free[viol[np.argmin(F[viol])]] = True
        else:
            neg = v < 0
            ws = w[S]
            ratios = ws[neg] / (ws[neg] - v[neg])
            alpha = float(np.min(ratios))
            ws = ws + alpha * (v - ws)
            blocking = np.flatnonzero(neg)[ratios <= alpha]
            ws[blocking] = 0.0
            ws = np.maximum(ws, 0.0)
            w = np.zeros(n)
            w[S] = ws
            w /= w.sum()
            free = w > 0
            history.append(discrete_energy(w, V, K, beta))
    raise EquilibriumError("active-set phase did not terminate", residual=math.nan)


def solve_equilibrium(problem: EquilibriumProblem, tol: float = 1e-8, *, pg_iterations: int = 100,
                      max_active_set: int = 2000, max_enlarge: int = 4,
                      edge_fraction: float = 0.05, edge_mass: float = 1e-8) -> EquilibriumSolution:
    """Minimize the discretized energy over the simplex; Euler-Lagrange residual <= ``tol``.

    A solution with mass ``>= edge_mass`` in the outer ``edge_fraction`` of the cells
    on either side triggers a wider window (when ``problem.field`` is available).
    """
    for _ in range(max_enlarge + 1):
        sol = _solve_once(problem, tol, pg_iterations, max_active_set)
        k = max(1, int(math.ceil(edge_fraction * problem.n_cells)))
        w = sol.mu.weights
        if w[:k].sum() < edge_mass and w[-k:].sum() < edge_mass:
            return sol
        log.info("equilibrium mass at window edge; enlarging [%g, %g]", problem.left, problem.right)
        problem = problem.enlarged()
    raise WindowTooSmallError("solution keeps reaching the window edge", residual=sol.el_residual)


def _solve_once(problem, tol, pg_iterations, max_active_set):
    V, beta, n = problem.V, problem.beta, problem.n_cells
    K = problem.log_kernel
    history: list[float] = []
    w = np.full(n, 1.0 / n)
    history.append(discrete_energy(w, V, K, beta))
    w = _projected_gradient(w, V, K, beta, pg_iterations, history, tol)
    pg_steps = len(history) - 1
    w, as_steps = _active_set(w, V, K, beta, tol, max_active_set, history)
    mu = GridMeasure.from_unnormalized(problem.left, problem.right, w)
    F = V + beta * (K @ mu.weights)
    residual, lam = _el_metrics(mu.weights, F, 0.0)
    if residual > tol:
        raise EquilibriumError(f"Euler-Lagrange residual {residual:.3g} exceeds tol {tol:.3g}", residual)
    return EquilibriumSolution(mu=mu, effective_potential=F, lagrange_constant=lam, el_residual=residual,
                               iterations=pg_steps + as_steps, objective=history[-1],
                               objective_history=history, V=V, beta=beta)


def default_grid(Q, beta: float, n_cells: int = 1024) -> tuple[float, float, int]:
    """``[-3 r0, 3 r0]`` with ``r0`` the semicircle radius of the quadratic minorant of ``Q``."""
    alpha = getattr(Q, "alpha", 2.0)
    r0 = math.sqrt(2.0 * beta / alpha)
    return (-3.0 * r0, 3.0 * r0, n_cells)


def self_consistent_solve(Q: ExternalField, h: InteractionPotential, beta: float, grid=None,
                          tol: float = 1e-6, damping: float = 0.5, *, solver_tol: float = 1e-9,
                          max_iter: int = 200, max_enlarge: int = 3) -> EquilibriumSolution:
    """Fixed point ``mu = EqMeasure(Q + h_mu)`` by damped iteration.

    Stops at the first iterate whose self-consistency residual
    ``L1(mu, EqMeasure(Q + h_mu))`` is at most ``tol``; ``contraction_history``
    holds the residual of every iterate.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    left, right, n_cells = grid if grid is not None else default_grid(Q, beta)
    for _ in range(max_enlarge + 1):
        try:
            return _fixed_point(Q, h, beta, left, right, n_cells, tol, damping, solver_tol, max_iter)
        except WindowTooSmallError:
            c, half = 0.5 * (left + right), 0.75 * (right - left)
            left, right = c - half, c + half
            log.info("self-consistent solve: enlarging window to [%g, %g]", left, right)
    raise WindowTooSmallError("self-consistent measure keeps reaching the window edge")


def _solve_fixed_window(V, beta, left, right, n_cells, solver_tol):
    problem = EquilibriumProblem.from_field(V, beta, left, right, n_cells)
    return solve_equilibrium(problem, solver_tol, max_enlarge=0)


def _fixed_point(Q, h, beta, left, right, n_cells, tol, damping, solver_tol, max_iter):
    base = _solve_fixed_window(Q, beta, left, right, n_cells, solver_tol)
    if h.is_zero:
        return replace(base, self_consistency_residual=0.0, contraction_history=[0.0])
    mu = base.mu
    history: list[float] = []
    increases = 0
    for _ in range(max_iter):
        nu = _solve_fixed_window(lambda t, m=mu: Q(t) + convolve(h, m, t), beta, left, right, n_cells,
                                 solver_tol)
        r = mu.l1_distance(nu.mu)
        history.append(r)
        log.debug("self-consistent iteration %d: L1 residual %.3e", len(history), r)
        if r <= tol:
            # certificate of mu itself against its own field V = Q + h_mu
            F = nu.V + beta * (log_kernel(n_cells, mu.dx) @ mu.weights)
            res, lam = _el_metrics(mu.weights, F, 0.0)
            return replace(nu, mu=mu, effective_potential=F, lagrange_constant=lam, el_residual=res,
                           iterations=len(history), self_consistency_residual=r,
                           contraction_history=history)
        increases = increases + 1 if len(history) > 1 and r > history[-2] else 0
        if increases >= 5:
            raise NonContractionError("self-consistent iteration is not contracting; increase alpha_Q "
                                      "or decrease the damping", residual=r)
        mu = mu.mix(nu.mu, damping)
    raise EquilibriumError(f"no fixed point within {max_iter} iterations", residual=history[-1])


def semicircle_density(t, radius: float):
    t = np.asarray(t, dtype=float)
    return 2.0 / (math.pi * radius**2) * np.sqrt(np.clip(radius**2 - t * t, 0.0, None))


def semicircle_measure(radius: float, left: float, right: float, n_cells: int) -> GridMeasure:
    """Exact cell masses of the semicircle law of the given radius."""
    edges = np.linspace(left, right, n_cells + 1)
    u = np.clip(edges / radius, -1.0, 1.0)
    cdf = 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / math.pi
    return GridMeasure.from_unnormalized(left, right, np.diff(cdf))
