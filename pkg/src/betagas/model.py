"""Fields, pair interactions, grid measures and the energy of the ensemble.

The modified ensemble on ``R^N`` has density proportional to ``exp(-H(x))`` with

    H(x) = N * sum_j Q(x_j) - beta * sum_{i<j} log|x_i - x_j| + sum_{i<j} h(x_i - x_j)

where ``Q`` is an even, strongly convex external field and ``h`` an even
Gaussian mixture.  Splitting the pair term around a probability measure ``mu``
gives

    sum_{i<j} h(x_i - x_j) = -N^2/2 h_mumu - N/2 h(0) + N sum_j h_mu(x_j) - U(x)

with the fluctuation statistic ``U`` computed by :func:`u_direct` and
:func:`u_fourier`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FIELD_KINDS = ("gaussian", "even-polynomial", "gaussian-plus-bump")

#: tolerance on the total mass of a :class:`GridMeasure`
MASS_TOL = 1e-12


class AdmissibilityWarning(UserWarning):
    """The pair interaction is outside the regime where convergence is certified."""


class QuadratureWarning(UserWarning):
    """The Fourier quadrature window truncates a non-negligible part of the integrand."""


# ---------------------------------------------------------------------------
# external field
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExternalField:
    """Even, strongly convex confining field ``Q``.

    ``coefficients`` are read according to ``kind``:

    * ``gaussian``: ``[c]`` and ``Q(t) = c t^2``;
    * ``even-polynomial``: ``[c_0, c_1, ...]`` and ``Q(t) = sum_k c_k t^(2k)``;
    * ``gaussian-plus-bump``: ``[c, A, B]`` and ``Q(t) = c t^2 + A exp(-B t^2)``.

    ``domain_bound`` is the half width of the window on which convexity is
    checked.  Construction fails if ``Q''`` is not bounded below by a positive
    constant there.
    """

    kind: str = "gaussian"
    coefficients: tuple[float, ...] = (1.0,)
    domain_bound: float = 4.0
    poly: np.ndarray = field(init=False, repr=False, compare=False)
    bump: tuple[float, float] = field(init=False, repr=False, compare=False)
    alpha: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {FIELD_KINDS}")
        if not self.domain_bound > 0:
            raise ValueError("domain_bound must be positive")
        if self.kind == "gaussian":
            if len(coeffs) != 1:
                raise ValueError("gaussian field takes one coefficient [c] for c*t^2")
            poly, bump = np.array([0.0, coeffs[0]]), (0.0, 1.0)
        elif self.kind == "even-polynomial":
            if not coeffs:
                raise ValueError("even-polynomial field needs at least one coefficient")
            poly, bump = np.array(coeffs), (0.0, 1.0)
        else:
            if len(coeffs) != 3:
                raise ValueError("gaussian-plus-bump field takes [c, A, B]")
            if coeffs[2] <= 0:
                raise ValueError("bump width B must be positive")
            poly, bump = np.array([0.0, coeffs[0]]), (coeffs[1], coeffs[2])
        poly.setflags(write=False)
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "bump", bump)
        grid = np.linspace(-self.domain_bound, self.domain_bound, 4001)
        alpha = float(np.min(self.second_derivative(grid)))
        if not alpha > 0:
            raise ValueError(f"field is not strongly convex on [-L, L]: min Q'' = {alpha:.3g}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def gaussian(cls, c: float = 1.0, domain_bound: float = 4.0) -> ExternalField:
        return cls("gaussian", (c,), domain_bound)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = t * t
        out = np.polynomial.polynomial.polyval(s, self.poly)
        amp, width = self.bump
        if amp:
            out = out + amp * np.exp(-width * s)
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        s = t * t
        k = np.arange(len(self.poly))
        # d/dt c_k t^(2k) = 2k c_k t^(2k-1)
        dcoef = (2 * k * self.poly)[1:]
        out = t * np.polynomial.polynomial.polyval(s, dcoef) if len(dcoef) else np.zeros_like(t)
        amp, width = self.bump
        if amp:
            out = out - 2.0 * amp * width * t * np.exp(-width * s)
        return out

    def second_derivative(self, t):
        t = np.asarray(t, dtype=float)
        s = t * t
        k = np.arange(len(self.poly))
        ddcoef = (2 * k * (2 * k - 1) * self.poly)[1:]
        out = np.polynomial.polynomial.polyval(s, ddcoef) if len(ddcoef) else np.zeros_like(t)
        amp, width = self.bump
        if amp:
            out = out + amp * (4.0 * width**2 * s - 2.0 * width) * np.exp(-width * s)
        return out

    def growth_ok(self, beta: float) -> bool:
        """Concrete proxy for ``Q(t) >= beta' log|t|`` at infinity."""
        L = self.domain_bound
        return bool(self(L) > beta * math.log(L))

    def kernel_params(self):
        """Flat parameters consumed by :mod:`betagas.kernels`."""
        return (np.ascontiguousarray(self.poly, dtype=float), self.bump[0], self.bump[1],
                0.0, 1.0, _EMPTY, _EMPTY)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "coefficients": list(self.coefficients),
                "domain_bound": self.domain_bound}

    @classmethod
    def from_dict(cls, d: dict) -> ExternalField:
        return cls(d["kind"], tuple(d["coefficients"]), d.get("domain_bound", 4.0))


_EMPTY = np.zeros(0)


# ---------------------------------------------------------------------------
# pair interaction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionPotential:
    """Gaussian mixture ``h(t) = sum_i a_i exp(-b_i t^2)``.

    The Fourier transform uses the unitary convention
    ``hhat(t) = (2 pi)^(-1/2) int exp(-i t s) h(s) ds``, which for one term is
    ``a / sqrt(2 b) * exp(-t^2 / (4 b))``.
    """

    terms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        terms = tuple((float(a), float(b)) for a, b in self.terms)
        for _, b in terms:
            if not b > 0:
                raise ValueError("Gaussian widths b_i must be positive")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def zero(cls) -> InteractionPotential:
        return cls(())

    @classmethod
    def gaussian(cls, amplitude: float, width: float = 1.0) -> InteractionPotential:
        return cls(((amplitude, width),))

    @property
    def is_zero(self) -> bool:
        return all(a == 0.0 for a, _ in self.terms)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.terms], dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return np.array([b for _, b in self.terms], dtype=float)

    def _apply(self, t, fn):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, b in self.terms:
            if a:
                out = out + fn(a, b, t)
        return out

    def __call__(self, t):
        return self._apply(t, lambda a, b, t: a * np.exp(-b * t * t))

    def derivative(self, t):
        return self._apply(t, lambda a, b, t: -2.0 * a * b * t * np.exp(-b * t * t))

    def second_derivative(self, t):
        return self._apply(t, lambda a, b, t: a * (4.0 * b * b * t * t - 2.0 * b) * np.exp(-b * t * t))

    def fourier(self, t):
        return self._apply(t, lambda a, b, t: a / math.sqrt(2.0 * b) * np.exp(-t * t / (4.0 * b)))

    def fourier_tail(self, T: float) -> float:
        """``int_{|t|>T} |hhat(t)| dt``."""
        total = 0.0
        for a, b in self.terms:
            # int_T^inf exp(-t^2/4b) dt = sqrt(pi b) erfc(T / (2 sqrt b))
            total += 2.0 * abs(a) / math.sqrt(2.0 * b) * math.sqrt(math.pi * b) * math.erfc(T / (2.0 * math.sqrt(b)))
        return total

    @property
    def sup_abs(self) -> float:
        return float(sum(abs(a) for a, _ in self.terms))

    @property
    def effective_range(self) -> float:
        """Distance beyond which ``|h| < 1e-16 * sum|a_i|``."""
        if not self.terms:
            return 0.0
        return float(math.sqrt(37.0 / min(b for _, b in self.terms)))

    @property
    def alpha_h(self) -> float:
        """``sup_t -h''(t)``, evaluated on a fine grid (exact at ``t = 0``)."""
        if self.is_zero:
            return 0.0
        t = np.linspace(0.0, self.effective_range, 20001)
        return float(max(np.max(-self.second_derivative(t)), 0.0))

    @property
    def is_positive_semidefinite(self) -> bool:
        """``hhat >= 0`` everywhere, checked on a grid covering its decay range."""
        if all(a >= 0 for a, _ in self.terms):
            return True
        bmax = max(b for _, b in self.terms)
        t = np.linspace(0.0, 2.0 * math.sqrt(bmax * 40.0), 20001)
        return bool(np.all(self.fourier(t) >= -1e-14 * self.sup_abs))

    def kernel_params(self):
        return (np.ascontiguousarray(self.amplitudes), np.ascontiguousarray(self.widths))

    def to_list(self) -> list:
        return [[a, b] for a, b in self.terms]

    @classmethod
    def from_list(cls, terms) -> InteractionPotential:
        return cls(tuple((a, b) for a, b in terms))


# ---------------------------------------------------------------------------
# measures and configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability measure on the cells of a uniform grid over ``[left, right]``.

    Cell ``c`` carries mass ``weights[c]``, located at its midpoint for every
    convolution and Fourier computation.
    """

    left: float
    right: float
    n_cells: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != self.n_cells:
            raise ValueError(f"expected {self.n_cells} weights, got shape {w.shape}")
        if not self.right > self.left:
            raise ValueError("right must exceed left")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"measure is not normalized: total mass {w.sum()!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_unnormalized(cls, left, right, weights) -> GridMeasure:
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return cls(float(left), float(right), len(w), w / w.sum())

    @classmethod
    def point_mass(cls, a: float, half_width: float = 0.5) -> GridMeasure:
        return cls(a - half_width, a + half_width, 1, np.ones(1))

    @classmethod
    def uniform(cls, left, right, n_cells) -> GridMeasure:
        return cls(float(left), float(right), n_cells, np.full(n_cells, 1.0 / n_cells))

    @classmethod
    def from_density(cls, density, left, right, n_cells) -> GridMeasure:
        """Discretize a density by its cell integrals (Simpson on each cell)."""
        edges = np.linspace(left, right, n_cells + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        w = (density(edges[:-1]) + 4.0 * density(mids) + density(edges[1:])) / 6.0
        return cls.from_unnormalized(left, right, w)

    @property
    def dx(self) -> float:
        return (self.right - self.left) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.left, self.right, self.n_cells + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def density(self) -> np.ndarray:
        return self.weights / self.dx

    def density_at(self, t) -> np.ndarray:
        """Piecewise-constant density, zero outside the grid."""
        t = np.asarray(t, dtype=float)
        idx = np.floor((t - self.left) / self.dx).astype(int)
        inside = (idx >= 0) & (idx < self.n_cells)
        out = np.zeros_like(t)
        out[inside] = self.density[idx[inside]]
        return out

    def cdf(self, t) -> np.ndarray:
        """Distribution function, linear inside each cell."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return np.interp(t, self.edges, cum)

    def quantile(self, p) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        # strictly increasing abscissae for np.interp
        keep = np.concatenate([[True], np.diff(cum) > 0])
        return np.interp(p, cum[keep], self.edges[keep])

    def support(self, threshold: float = 1e-12) -> tuple[float, float]:
        """Outer edges of the first and last cell with weight above ``threshold``."""
        idx = np.flatnonzero(self.weights > threshold)
        if len(idx) == 0:
            raise ValueError("empty support")
        e = self.edges
        return float(e[idx[0]]), float(e[idx[-1] + 1])

    def expect(self, f) -> float:
        return float(np.dot(self.weights, f(self.midpoints)))

    def l1_distance(self, other: GridMeasure) -> float:
        """L1 distance of the two densities (equal grids are compared cell by cell)."""
        if self.same_grid(other):
            return float(np.abs(self.weights - other.weights).sum())
        # common refinement: compare piecewise constant densities on merged edges
        e = np.union1d(self.edges, other.edges)
        mid = 0.5 * (e[:-1] + e[1:])
        return float(np.sum(np.abs(self.density_at(mid) - other.density_at(mid)) * np.diff(e)))

    def same_grid(self, other: GridMeasure) -> bool:
        return (self.n_cells == other.n_cells and math.isclose(self.left, other.left, abs_tol=1e-12)
                and math.isclose(self.right, other.right, abs_tol=1e-12))

    def mirrored(self) -> GridMeasure:
        return GridMeasure(-self.right, -self.left, self.n_cells, self.weights[::-1].copy())

    def mix(self, other: GridMeasure, theta: float) -> GridMeasure:
        """``(1 - theta) * self + theta * other`` on the common grid."""
        if not self.same_grid(other):
            raise ValueError("measures live on different grids")
        return GridMeasure.from_unnormalized(self.left, self.right,
                                             (1.0 - theta) * self.weights + theta * other.weights)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Positions of the ``N`` particles, stored sorted."""

    positions: np.ndarray
    energy_cache: float | None = None

    def __post_init__(self):
        x = np.sort(np.asarray(self.positions, dtype=float).ravel())
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def N(self) -> int:
        return len(self.positions)


def _positions(x) -> np.ndarray:
    if isinstance(x, Configuration):
        return x.positions
    x = np.asarray(x, dtype=float).ravel()
    if np.any(np.isnan(x)):
        raise ValueError("NaN in configuration")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite position in configuration")
    return np.sort(x)


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """``N`` particles at inverse temperature ``beta`` in field ``Q`` with pair term ``h``."""

    N: int
    beta: float
    Q: ExternalField = field(default_factory=ExternalField)
    h: InteractionPotential = field(default_factory=InteractionPotential.zero)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "beta", float(self.beta))
        if not self.h.is_zero and not self.h.is_positive_semidefinite:
            warnings.warn("interaction is not positive semi-definite: admissibility flag is advisory only",
                          AdmissibilityWarning, stacklevel=2)

    @property
    def alpha_Q(self) -> float:
        return self.Q.alpha

    @property
    def alpha_h(self) -> float:
        return self.h.alpha_h

    @property
    def admissible(self) -> bool:
        return self.alpha_Q > self.alpha_h

    @property
    def certified(self) -> bool:
        """Admissible with the explicit threshold valid for positive semi-definite ``h``."""
        return self.admissible and self.h.is_positive_semidefinite

    def with_N(self, N: int) -> EnsembleSpec:
        return EnsembleSpec(N, self.beta, self.Q, self.h)

    def to_dict(self) -> dict:
        return {"N": self.N, "beta": self.beta, "Q": self.Q.to_dict(), "h": self.h.to_list()}


# ---------------------------------------------------------------------------
# convolutions and energies
# ---------------------------------------------------------------------------


def _check_measure(mu: GridMeasure):
    if abs(float(np.sum(mu.weights)) - 1.0) > MASS_TOL or np.any(mu.weights < 0):
        raise ValueError("measure must be a normalized probability vector")


def _midpoint_sum(fn, mu: GridMeasure, s) -> np.ndarray:
    """``sum_c w_c fn(s - t_c)`` over cell midpoints ``t_c``."""
    s = np.asarray(s, dtype=float)
    nz = mu.weights > 0
    t, w = mu.midpoints[nz], mu.weights[nz]
    flat = s.ravel()
    out = np.empty_like(flat)
    # chunk to bound memory at len(s) * n_cells
    step = max(1, 2_000_000 // max(len(t), 1))
    for i in range(0, len(flat), step):
        out[i:i + step] = fn(flat[i:i + step, None] - t[None, :]) @ w
    return out.reshape(s.shape)


def convolve(h: InteractionPotential, mu: GridMeasure, s) -> np.ndarray:
    """``h_mu(s) = sum_c w_c h(t_c - s)`` over cell midpoints ``t_c``."""
    _check_measure(mu)
    if h.is_zero:
        return np.zeros_like(np.asarray(s, dtype=float))
    # h is even: h(t_c - s) = h(s - t_c)
    return _midpoint_sum(h, mu, s)


def convolve_derivative(h: InteractionPotential, mu: GridMeasure, s) -> np.ndarray:
    """``d/ds h_mu(s) = sum_c w_c h'(s - t_c)``."""
    _check_measure(mu)
    if h.is_zero:
        return np.zeros_like(np.asarray(s, dtype=float))
    return _midpoint_sum(h.derivative, mu, s)


def double_convolve(h: InteractionPotential, mu: GridMeasure) -> float:
    """``h_mumu = sum_{c,c'} w_c w_c' h(t_c - t_c')``."""
    _check_measure(mu)
    if h.is_zero:
        return 0.0
    nz = mu.weights > 0
    t, w = mu.midpoints[nz], mu.weights[nz]
    return float(w @ h(t[:, None] - t[None, :]) @ w)


def hamiltonian(x, spec: EnsembleSpec) -> float:
    """Energy ``H(x)``; ``+inf`` when two particles coincide."""
    x = _positions(x)
    if len(x) != spec.N:
        raise ValueError(f"configuration has {len(x)} particles, spec has N={spec.N}")
    if np.any(np.diff(x) == 0.0):
        return math.inf
    iu = np.triu_indices(len(x), 1)
    d = x[iu[1]] - x[iu[0]]
    energy = spec.N * float(np.sum(spec.Q(x))) - spec.beta * float(np.sum(np.log(d)))
    if not spec.h.is_zero:
        energy += float(np.sum(spec.h(d)))
    return energy


def grad_hamiltonian(x, spec: EnsembleSpec) -> np.ndarray:
    """Gradient of :func:`hamiltonian`, in the order of the given positions."""
    if isinstance(x, Configuration):
        x = x.positions
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite position in configuration")
    diff = x[:, None] - x[None, :]
    off = ~np.eye(len(x), dtype=bool)
    if np.any(diff[off] == 0.0):
        raise ValueError("gradient undefined at coincident particles")
    inv = np.zeros_like(diff)
    inv[off] = 1.0 / diff[off]
    g = spec.N * spec.Q.derivative(x) - spec.beta * inv.sum(axis=1)
    if not spec.h.is_zero:
        g = g + spec.h.derivative(diff).sum(axis=1)  # h'(0) = 0 on the diagonal
    return g


def u_direct(x, h: InteractionPotential, mu: GridMeasure) -> float:
    """Fluctuation statistic ``U(x)`` by direct summation over all ordered pairs (incl. i = j)."""
    x = _positions(x)
    _check_measure(mu)
    if h.is_zero:
        return 0.0
    N = len(x)
    pair = float(np.sum(h(x[:, None] - x[None, :])))
    one = float(np.sum(convolve(h, mu, x)))
    return -0.5 * (pair - 2.0 * N * one + N * N * double_convolve(h, mu))


def grad_u(x, h: InteractionPotential, mu: GridMeasure) -> np.ndarray:
    """``dU/dx_l = -sum_j h'(x_l - x_j) + N (h_mu)'(x_l)``, in the order of the given positions."""
    if isinstance(x, Configuration):
        x = x.positions
    x = np.asarray(x, dtype=float).ravel()
    _check_measure(mu)
    if h.is_zero:
        return np.zeros_like(x)
    N = len(x)
    return -h.derivative(x[:, None] - x[None, :]).sum(axis=1) + N * convolve_derivative(h, mu, x)


@dataclass(frozen=True)
class FourierQuadrature:
    """Trapezoid rule on ``[-t_max, t_max]`` for the Fourier form of ``U``.

    Left as ``None``, ``t_max`` and ``n_nodes`` are chosen so that both the
    truncated tail and the aliasing error stay below ``tol``.
    """

    tol: float = 1e-10
    t_max: float | None = None
    n_nodes: int | None = None


def u_fourier(x, h: InteractionPotential, mu: GridMeasure,
              quad: FourierQuadrature = FourierQuadrature()) -> float:
    """``U(x) = -(2 sqrt(2 pi))^-1 int |u_N(t, x)|^2 hhat(t) dt``.

    ``u_N(t, x) = sum_j exp(i t x_j) - N int exp(i t s) dmu(s)``; for even
    ``mu`` the imaginary part of the subtracted mean vanishes.
    """
    x = _positions(x)
    _check_measure(mu)
    if h.is_zero:
        return 0.0
    N = len(x)
    nz = mu.weights > 0
    tc, w = mu.midpoints[nz], mu.weights[nz]
    scale = (2.0 * N) ** 2 * h.sup_abs / (2.0 * math.sqrt(2.0 * math.pi))
    bmax = max(b for _, b in h.terms)
    bmin = min(b for _, b in h.terms)
    if quad.t_max is None:
        T = 2.0 * math.sqrt(bmax) * math.sqrt(max(math.log(max(scale, 1.0) / quad.tol), 1.0)) + 1.0
    else:
        T = float(quad.t_max)
    tail = (2.0 * N) ** 2 / (2.0 * math.sqrt(2.0 * math.pi)) * h.fourier_tail(T)
    if tail > quad.tol:
        warnings.warn(f"Fourier window t_max={T:.3g} leaves tail bound {tail:.3g} > tol={quad.tol:.3g}",
                      QuadratureWarning, stacklevel=2)
    if quad.n_nodes is None:
        pts = np.concatenate([x, tc])
        spread = float(pts.max() - pts.min())
        # the integrand is a sum of h(. - d) over differences |d| <= spread; alias-free
        # if the dual period exceeds spread plus the decay range of h
        reach = math.sqrt(math.log(max(scale, 1.0) / quad.tol + 1.0) / bmin)
        dt = 2.0 * math.pi / (spread + reach + 1.0)
        n = 2 * int(math.ceil(T / dt)) + 1
    else:
        n = int(quad.n_nodes)
    t = np.linspace(-T, T, n)
    empirical = np.exp(1j * np.outer(t, x)).sum(axis=1)
    mean = np.exp(1j * np.outer(t, tc)) @ w
    integrand = np.abs(empirical - N * mean) ** 2 * h.fourier(t)
    val = np.trapezoid(integrand, t) if hasattr(np, "trapezoid") else np.trapz(integrand, t)
    return float(-val / (2.0 * math.sqrt(2.0 * math.pi)))


def hoeffding_terms(x, h: InteractionPotential, mu: GridMeasure) -> dict:
    """Both sides of the pair-sum decomposition, each term computed independently."""
    x = _positions(x)
    N = len(x)
    iu = np.triu_indices(N, 1)
    return {
        "pair_sum": float(np.sum(h(x[iu[1]] - x[iu[0]]))),
        "constant": -0.5 * N * N * double_convolve(h, mu) - 0.5 * N * float(h(0.0)),
        "one_body": N * float(np.sum(convolve(h, mu, x))),
        "U": u_direct(x, h, mu),
    }


class EffectiveField:
    """External field ``V(t) = Q(t) + h_mu(t)`` of the comparison ensemble.

    ``h_mu`` is tabulated once on a uniform grid and evaluated by cubic Hermite
    interpolation (values and exact derivatives at the nodes); beyond the table
    it is taken as zero, which holds to double precision by construction of the
    table range.
    """

    def __init__(self, Q: ExternalField, h: InteractionPotential, mu: GridMeasure, n_table: int = 8193):
        self.Q, self.h, self.mu = Q, h, mu
        self.kind = "effective"
        self.domain_bound = Q.domain_bound
        R = max(abs(mu.left), abs(mu.right), Q.domain_bound) + h.effective_range
        self.table_x = np.linspace(-R, R, n_table)
        self.table_v = convolve(h, mu, self.table_x)
        self.table_d = convolve_derivative(h, mu, self.table_x)
        grid = np.linspace(-self.domain_bound, self.domain_bound, 4001)
        self.alpha = float(np.min(self.second_derivative(grid)))

    def _table(self, t, deriv=0):
        t = np.asarray(t, dtype=float)
        x0, dx = self.table_x[0], self.table_x[1] - self.table_x[0]
        n = len(self.table_x)
        u = (t - x0) / dx
        i = np.clip(np.floor(u).astype(int), 0, n - 2)
        s = u - i
        inside = (u >= 0) & (u <= n - 1)
        v0, v1 = self.table_v[i], self.table_v[i + 1]
        d0, d1 = self.table_d[i] * dx, self.table_d[i + 1] * dx
        if deriv == 0:
            s2, s3 = s * s, s * s * s
            out = (2 * s3 - 3 * s2 + 1) * v0 + (s3 - 2 * s2 + s) * d0 + (-2 * s3 + 3 * s2) * v1 + (s3 - s2) * d1
        else:
            s2 = s * s
            out = ((6 * s2 - 6 * s) * v0 + (3 * s2 - 4 * s + 1) * d0 + (-6 * s2 + 6 * s) * v1
                   + (3 * s2 - 2 * s) * d1) / dx
        return np.where(inside, out, 0.0)

    def __call__(self, t):
        return self.Q(t) + self._table(t)

    def derivative(self, t):
        return self.Q.derivative(t) + self._table(t, deriv=1)

    def second_derivative(self, t):
        return self.Q.second_derivative(t) + _midpoint_sum(self.h.second_derivative, self.mu, t)

    def growth_ok(self, beta: float) -> bool:
        L = self.domain_bound
        return bool(self(L) > beta * math.log(L))

    def kernel_params(self):
        poly, bamp, bwid = self.Q.kernel_params()[:3]
        return (poly, bamp, bwid, float(self.table_x[0]), float(self.table_x[1] - self.table_x[0]),
                np.ascontiguousarray(self.table_v), np.ascontiguousarray(self.table_d))

    def to_dict(self) -> dict:
        import hashlib
        digest = hashlib.sha256(np.ascontiguousarray(self.mu.weights).tobytes()).hexdigest()[:16]
        return {"kind": "effective", "Q": self.Q.to_dict(), "h": self.h.to_list(),
                "mu": {"left": self.mu.left, "right": self.mu.right, "n_cells": self.mu.n_cells,
                       "sha256": digest}}


def sorted_positions(x: Sequence[float] | np.ndarray | Configuration) -> np.ndarray:
    return _positions(x)
