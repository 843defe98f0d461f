"""Estimators on sample sets.

All estimators take samples as an array of shape ``(n_configurations, N)``
(or a list of configurations) and sort each row on ingestion, so every
statistic is invariant under relabelling the particles.  Standard errors use
batch means over contiguous blocks of configurations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve
from scipy.special import ndtr
from scipy.stats import ks_2samp, kstest

from .model import Configuration, GridMeasure, InteractionPotential, grad_u, u_direct

__all__ = [
    "WeightDegeneracyWarning", "UnfoldingWarning", "as_samples", "batch_means", "empirical_density",
    "SpacingSample", "unfold", "bulk_gaps", "SmoothBump", "BumpProduct", "CorrelationEstimate",
    "averaged_correlation", "sine_kernel_pair_reference", "SpacingHistogram", "spacing_histogram",
    "spacing_ks", "DirichletEstimate", "estimate_dirichlet", "exp_moment_diagnostic",
    "TestFunction", "concentration_check", "window_half_width",
]

MIN_BATCHES = 20


class WeightDegeneracyWarning(UserWarning):
    """Importance weights have a small effective sample size."""


class UnfoldingWarning(UserWarning):
    """Many points fall outside the support of the unfolding measure."""


def as_samples(samples) -> np.ndarray:
    """Sorted ``(M, N)`` float array from an array, a list of rows or of configurations."""
    if isinstance(samples, np.ndarray):
        arr = np.array(samples, dtype=float, ndmin=2)
    else:
        rows = [s.positions if isinstance(s, Configuration) else s for s in samples]
        if not rows:
            raise ValueError("no samples")
        arr = np.array(rows, dtype=float, ndmin=2)
    if arr.size == 0:
        raise ValueError("no samples")
    return np.sort(arr, axis=1)


def batch_means(values, n_batches: int = MIN_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a sequence of per-sample values."""
    v = np.asarray(values, dtype=float)
    if n_batches < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} batches")
    if len(v) < n_batches:
        raise ValueError(f"{len(v)} values cannot form {n_batches} batches")
    size = len(v) // n_batches
    means = v[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(v.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


# ---------------------------------------------------------------------------
# one-point density
# ---------------------------------------------------------------------------


def empirical_density(samples, grid, bandwidth: float | None = None) -> GridMeasure:
    """Gaussian kernel density estimate of the one-point function.

    Positions are linearly binned onto the cell midpoints and convolved with
    the cell-integrated Gaussian kernel; the result is renormalized to mass 1.

    Parameters
    ----------
    samples : array_like, shape (M, N)
    grid : (left, right, n_cells) or GridMeasure
    bandwidth : float, optional
        Kernel standard deviation.  Default ``0.5 * sd * n**(-1/5)`` over the
        pooled positions (half of Silverman's rule, which over-smooths the
        square-root edges of the limiting densities).
    """
    x = as_samples(samples).ravel()
    if len(x) == 0:
        raise ValueError("empty input")
    if isinstance(grid, GridMeasure):
        left, right, n = grid.left, grid.right, grid.n_cells
    else:
        left, right, n = grid
    n = int(n)
    dx = (right - left) / n
    if bandwidth is None:
        sd = float(np.std(x))
        bandwidth = 0.5 * sd * len(x) ** (-0.2) if sd > 0 else dx
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    # linear binning onto midpoints
    u = (x - left) / dx - 0.5
    i = np.floor(u).astype(np.int64)
    r = u - i
    counts = np.zeros(n + 2)
    np.add.at(counts, np.clip(i + 1, 0, n + 1), 1.0 - r)
    np.add.at(counts, np.clip(i + 2, 0, n + 1), r)
    counts = counts[1:-1]
    half = int(math.ceil(6.0 * bandwidth / dx)) + 1
    j = np.arange(-half, half + 1)
    kern = ndtr((j + 0.5) * dx / bandwidth) - ndtr((j - 0.5) * dx / bandwidth)
    dens = fftconvolve(counts, kern, mode="same") if half < 4 * n else np.convolve(counts, kern, "same")
    dens = np.clip(dens, 0.0, None)
    if dens.sum() <= 0:
        raise ValueError("no sample mass falls on the grid")
    return GridMeasure.from_unnormalized(left, right, dens)


# ---------------------------------------------------------------------------
# unfolding and spacings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpacingSample:
    """Unfolded positions of one configuration and its bulk gaps."""

    unfolded_points: np.ndarray
    gaps: np.ndarray
    window: tuple[float, float]


def _bulk_window(mu: GridMeasure, fraction: float) -> tuple[float, float]:
    lo, hi = mu.support()
    c, w = 0.5 * (lo + hi), 0.5 * fraction * (hi - lo)
    return c - w, c + w


def unfold(config, mu: GridMeasure, bulk_fraction: float = 0.6) -> SpacingSample:
    """Map positions through ``N * F_mu`` and keep gaps inside the central bulk.

    A gap is kept when both of its endpoints lie in the central
    ``bulk_fraction`` of the support of ``mu``.
    """
    x = config.positions if isinstance(config, Configuration) else np.sort(np.asarray(config, float))
    N = len(x)
    F = mu.cdf(x)
    if np.mean(np.abs(F - 0.5) >= 0.5 - 1e-9) > 0.1:
        warnings.warn("more than 10% of the points lie outside the support of mu", UnfoldingWarning,
                      stacklevel=2)
    y = N * F
    lo, hi = _bulk_window(mu, bulk_fraction)
    inside = (x >= lo) & (x <= hi)
    both = inside[1:] & inside[:-1]
    return SpacingSample(unfolded_points=y, gaps=np.diff(y)[both], window=(lo, hi))


def bulk_gaps(samples, mu: GridMeasure, bulk_fraction: float = 0.6) -> np.ndarray:
    """Pooled bulk gaps of all configurations (vectorized :func:`unfold`)."""
    X = as_samples(samples)
    N = X.shape[1]
    F = mu.cdf(X)
    if np.mean(np.abs(F - 0.5) >= 0.5 - 1e-9) > 0.1:
        warnings.warn("more than 10% of the points lie outside the support of mu", UnfoldingWarning,
                      stacklevel=2)
    lo, hi = _bulk_window(mu, bulk_fraction)
    inside = (X >= lo) & (X <= hi)
    both = inside[:, 1:] & inside[:, :-1]
    return np.diff(N * F, axis=1)[both]


@dataclass(frozen=True)
class SpacingHistogram:
    edges: np.ndarray
    density: np.ndarray
    mass: np.ndarray
    ecdf_x: np.ndarray
    ecdf_y: np.ndarray

    def cdf(self, s):
        """Empirical CDF of the gaps (right-continuous step function)."""
        return np.searchsorted(self.ecdf_x, s, side="right") / len(self.ecdf_x)


def spacing_histogram(gaps, bins=50, range_=(0.0, 4.0)) -> SpacingHistogram:
    """Normalized histogram of gaps plus the sorted sample for KS tests.

    Gaps beyond the histogram range are folded into the last bin so the bin
    masses always sum to one.
    """
    g = np.sort(np.asarray(gaps, dtype=float))
    if len(g) < 1000:
        warnings.warn(f"only {len(g)} gaps; histogram is noisy", stacklevel=2)
    edges = np.histogram_bin_edges(g, bins=bins, range=range_)
    counts, _ = np.histogram(np.clip(g, edges[0], edges[-1]), bins=edges)
    mass = counts / counts.sum()
    return SpacingHistogram(edges=edges, density=mass / np.diff(edges), mass=mass,
                            ecdf_x=g, ecdf_y=np.arange(1, len(g) + 1) / len(g))


def spacing_ks(gaps_a, gaps_b=None, cdf=None) -> float:
    """Two-sample KS distance, or one-sample against ``cdf`` when given."""
    if cdf is not None:
        return float(kstest(np.asarray(gaps_a), cdf).statistic)
    return float(ks_2samp(np.asarray(gaps_a), np.asarray(gaps_b)).statistic)


# ---------------------------------------------------------------------------
# averaged correlation functions
# ---------------------------------------------------------------------------


class SmoothBump:
    """``amplitude * psi(t / half_width)`` with ``psi(t) = exp(-1 / (1 - t^2))`` on ``(-1, 1)``."""

    _TABLE = 20001

    def __init__(self, half_width: float = 1.0, amplitude: float = 1.0, normalized: bool = False):
        if not half_width > 0:
            raise ValueError("half_width must be positive")
        self.half_width = float(half_width)
        t = np.linspace(-1.0, 1.0, self._TABLE)
        p = _psi(t)
        cum = integrate.cumulative_simpson(p, x=t, initial=0.0)
        self._t, self._cum = t, cum / cum[-1]
        base_integral = float(cum[-1]) * self.half_width
        self.amplitude = 1.0 / base_integral if normalized else float(amplitude)
        self.normalized = normalized

    def __call__(self, t):
        return self.amplitude * _psi(np.asarray(t, dtype=float) / self.half_width)

    @property
    def integral(self) -> float:
        return 1.0 if self.normalized else self.amplitude * self.half_width * self._mass_unit()

    def _mass_unit(self):
        return float(integrate.quad(_psi, -1, 1, epsabs=1e-14)[0])

    def cdf(self, t):
        """``int_{-inf}^t`` of the bump divided by its integral."""
        return np.interp(np.asarray(t, dtype=float) / self.half_width, self._t, self._cum, left=0.0, right=1.0)

    def to_dict(self) -> dict:
        return {"half_width": self.half_width, "amplitude": self.amplitude, "normalized": self.normalized}


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass
class BumpProduct:
    """Test function ``f(t_1, ..., t_k) = phi(t_1) * prod_{j >= 2} g_j(t_j - t_1)``.

    ``phi`` is a bump of unit integral; the ``g_j`` are bumps in the
    difference variables.  ``k = 1 + len(pair_half_widths)``.
    """

    center_half_width: float = 1.0
    pair_half_widths: tuple = ()
    pair_amplitudes: tuple = ()
    phi: SmoothBump = field(init=False, repr=False)
    pair: list = field(init=False, repr=False)

    def __post_init__(self):
        self.pair_half_widths = tuple(float(w) for w in self.pair_half_widths)
        if not self.pair_amplitudes:
            self.pair_amplitudes = (1.0,) * len(self.pair_half_widths)
        self.pair_amplitudes = tuple(float(a) for a in self.pair_amplitudes)
        if len(self.pair_amplitudes) != len(self.pair_half_widths):
            raise ValueError("one amplitude per pair bump")
        if len(self.pair_half_widths) > 2:
            raise ValueError("k is limited to 1, 2, 3")
        self.phi = SmoothBump(self.center_half_width, normalized=True)
        self.pair = [SmoothBump(w, a) for w, a in zip(self.pair_half_widths, self.pair_amplitudes)]

    @property
    def k(self) -> int:
        return 1 + len(self.pair)

    @property
    def reach(self) -> float:
        return max([b.half_width for b in self.pair], default=0.0)

    def integral(self) -> float:
        return float(np.prod([b.integral for b in self.pair])) if self.pair else 1.0

    def __call__(self, *t):
        out = self.phi(t[0])
        for g, tj in zip(self.pair, t[1:]):
            out = out * g(np.asarray(tj) - t[0])
        return out

    def to_dict(self) -> dict:
        return {"center_half_width": self.center_half_width, "pair_half_widths": list(self.pair_half_widths),
                "pair_amplitudes": list(self.pair_amplitudes)}

    @classmethod
    def from_dict(cls, d: dict) -> BumpProduct:
        return cls(d.get("center_half_width", 1.0), tuple(d.get("pair_half_widths", ())),
                   tuple(d.get("pair_amplitudes", ())))


@dataclass(frozen=True)
class CorrelationEstimate:
    k: int
    a: float
    s_N: float
    xi: float
    test_function: dict
    value: float
    std_error: float
    n_samples: int
    density_at_a: float
    per_sample: np.ndarray = field(repr=False, compare=False, default=None)


def window_half_width(N: int, xi: float) -> float:
    """``s_N = N ** (-1 + xi)``."""
    if not 0 < xi <= 0.5:
        raise ValueError("xi must lie in (0, 1/2]")
    return float(N) ** (-1.0 + xi)


def _neighbor_sums(X, scale, bumps, active):
    """Per-particle sums over other particles of each bump, and of the product of the first two.

    Uses that rows are sorted: the offset loop stops once every gap at that
    offset exceeds the largest bump reach.
    """
    M, N = X.shape
    sums = [np.zeros((M, N)) for _ in bumps]
    cross = np.zeros((M, N)) if len(bumps) == 2 else None
    reach = max(b.half_width for b in bumps) / scale
    for d in range(1, N):
        gap = X[:, d:] - X[:, :-d]
        if not np.any(gap[active[:, :-d] | active[:, d:]] < reach):
            break
        t = scale * gap
        vals = [b(t) for b in bumps]  # bumps are even
        for s, v in zip(sums, vals):
            s[:, :-d] += v
            s[:, d:] += v
        if cross is not None:
            p = vals[0] * vals[1]
            cross[:, :-d] += p
            cross[:, d:] += p
    return sums, cross


def averaged_correlation(samples, k: int, a: float, xi: float = 0.5, f: BumpProduct | None = None, *,
                         mu: GridMeasure, n_batches: int = MIN_BATCHES) -> CorrelationEstimate:
    """Locally averaged, rescaled ``k``-point correlation tested against ``f``.

    Estimates

    ``c_k E[ (2 s_N)^-1 int_{a - s_N}^{a + s_N} sum_{i_1 != ... != i_k}
    f(N mu(a) (x_{i_1} - u), ..., N mu(a) (x_{i_k} - u)) du ]``

    with ``c_k = N^k (N - k)! / N!``, so that a flat correlation gives
    ``int f``.  The ``u`` integral is done in closed form through the CDF of
    the center bump.

    Parameters
    ----------
    samples : array_like, shape (M, N)
    k : {1, 2, 3}
    a : float
        Bulk point.
    xi : float
        Window exponent in ``(0, 1/2]``.
    f : BumpProduct, optional
        Test function with ``f.k == k``; defaults to unit-width bumps.
    mu : GridMeasure
        Limiting measure supplying ``mu(a)`` and the bulk.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    if f is None:
        f = BumpProduct(1.0, (2.0,) * (k - 1))
    if f.k != k:
        raise ValueError(f"test function has k={f.k}, requested k={k}")
    X = as_samples(samples)
    M, N = X.shape
    if N < k:
        raise ValueError("fewer particles than k")
    s = window_half_width(N, xi)
    rho = float(mu.density_at(a))
    lo, hi = mu.support()
    if not rho > 0 or not lo < a < hi:
        raise ValueError(f"a={a} is outside the bulk of mu")
    if a - s <= lo or a + s >= hi:
        raise ValueError(f"window [a - s_N, a + s_N] = [{a - s:.4g}, {a + s:.4g}] leaves the support")
    scale = N * rho
    # u-average of phi(scale (x - u)) over the window
    A = (f.phi.cdf(scale * (X - a + s)) - f.phi.cdf(scale * (X - a - s))) / (2.0 * s * scale)
    # c_k = N^k (N-k)! / N!
    ck = math.exp(k * math.log(N) + math.lgamma(N - k + 1) - math.lgamma(N + 1))
    if k == 1:
        per = A.sum(axis=1)
    else:
        sums, cross = _neighbor_sums(X, scale, f.pair, A > 0)
        if k == 2:
            per = (A * sums[0]).sum(axis=1)
        else:
            per = (A * (sums[0] * sums[1] - cross)).sum(axis=1)
    per = ck * per
    value, se = batch_means(per, n_batches)
    return CorrelationEstimate(k=k, a=float(a), s_N=s, xi=float(xi), test_function=f.to_dict(), value=value,
                               std_error=se, n_samples=M, density_at_a=rho, per_sample=per)


def sine_kernel_pair_reference(g) -> float:
    """``int g(r) (1 - (sin(pi r) / (pi r))^2) dr`` for an even bump ``g``."""
    R = g.half_width
    val, _ = integrate.quad(lambda r: float(g(r)) * (1.0 - np.sinc(r) ** 2), -R, R, epsabs=1e-13,
                            epsrel=1e-12, limit=200)
    return float(val)


# ---------------------------------------------------------------------------
# Dirichlet form, exponential moments, concentration
# ---------------------------------------------------------------------------


def _u_values(X, h, mu):
    return np.array([u_direct(row, h, mu) for row in X])


def _ess(logw) -> float:
    w = np.exp(logw - np.max(logw))
    return float(w.sum() ** 2 / np.sum(w * w))


def _fd_grad_u(x, h, mu, step=1e-6):
    g = np.empty(len(x))
    for l in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[l] += step
        xm[l] -= step
        g[l] = (u_direct(xp, h, mu) - u_direct(xm, h, mu)) / (2.0 * step)
    return g


@dataclass(frozen=True)
class DirichletEstimate:
    N: int
    value: float
    ess: float
    n_samples: int


def estimate_dirichlet(samples, h: InteractionPotential, mu: GridMeasure, *, gradient="exact",
                       ess_min: float = 50.0) -> DirichletEstimate:
    """Self-normalized ``(8N)^-1 sum_l E[e^U (d_l U)^2] / E[e^U]``.

    ``samples`` must come from the comparison ensemble (field ``Q + h_mu``,
    no pair term).  ``gradient`` is ``"exact"`` (analytic) or ``"fd"``
    (central differences of ``U``), or a callable ``x -> grad U``.
    """
    X = as_samples(samples)
    M, N = X.shape
    if h.is_zero:
        return DirichletEstimate(N, 0.0, float(M), M)
    if gradient == "exact":
        gfun = lambda x: grad_u(x, h, mu)  # noqa: E731
    elif gradient == "fd":
        gfun = lambda x: _fd_grad_u(x, h, mu)  # noqa: E731
    else:
        gfun = gradient
    U = _u_values(X, h, mu)
    G2 = np.array([float(np.sum(gfun(row) ** 2)) for row in X])
    w = np.exp(U - U.max())
    ess = float(w.sum() ** 2 / np.sum(w * w))
    if ess < ess_min:
        warnings.warn(f"effective sample size {ess:.1f} < {ess_min:g}", WeightDegeneracyWarning, stacklevel=2)
    value = float(np.sum(w * G2) / np.sum(w)) / (8.0 * N)
    return DirichletEstimate(N, value, ess, M)


def exp_moment_diagnostic(samples, h: InteractionPotential, mu: GridMeasure, lam: float = 1.0, *,
                          n_batches: int = MIN_BATCHES, ess_min: float = 50.0, n_se: float = 3.0):
    """``E exp(lam U)`` with a batch-means interval ``estimate +- n_se * se``.

    Returns ``(lower, estimate, upper)``; exactly ``(1, 1, 1)`` when ``h = 0``
    or ``lam = 0``.
    """
    X = as_samples(samples)
    if h.is_zero or lam == 0:
        return 1.0, 1.0, 1.0
    U = _u_values(X, h, mu)
    if _ess(lam * U) < ess_min:
        warnings.warn("exponential weights are degenerate", WeightDegeneracyWarning, stacklevel=2)
    est, se = batch_means(np.exp(lam * U), n_batches)
    return est - n_se * se, est, est + n_se * se


class TestFunction:
    """Smooth test function for linear statistics.

    Kinds: ``"cos"``, ``"sin"`` (frequency ``omega``), ``"bump"`` (half width
    ``width``), ``"linear"`` (``t`` times a smooth cutoff equal to one on
    ``[-width, width]`` and vanishing beyond ``2 * width``), ``"constant"``.
    """

    __test__ = False  # not a pytest class
    KINDS = ("cos", "sin", "bump", "linear", "constant")

    def __init__(self, kind: str = "cos", omega: float = 1.0, width: float = 2.0, value: float = 1.0):
        if kind not in self.KINDS:
            raise ValueError(f"unknown test function {kind!r}")
        self.kind, self.omega, self.width, self.value = kind, float(omega), float(width), float(value)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "cos":
            return np.cos(self.omega * t)
        if self.kind == "sin":
            return np.sin(self.omega * t)
        if self.kind == "bump":
            return _psi(t / self.width)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        return t * _cutoff(np.abs(t) / self.width)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "omega": self.omega, "width": self.width, "value": self.value}


def _cutoff(r):
    """Smooth step: 1 for r <= 1, 0 for r >= 2."""
    s = np.clip(r - 1.0, 0.0, 1.0)
    a = np.where(s < 1, np.exp(-1.0 / np.maximum(1.0 - s, 1e-300)), 0.0)
    b = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


def concentration_check(f, sample_sets: dict, mus: dict, *, n_batches: int = MIN_BATCHES) -> list[dict]:
    """Mean and variance of ``sum_j f(x_j) - N int f dmu`` for each ``N``.

    Returns one row per ``N`` (ascending) with keys ``N``, ``mean``,
    ``mean_se`` (batch means), ``variance`` and ``n_samples``.
    """
    rows = []
    for N in sorted(sample_sets):
        X = as_samples(sample_sets[N])
        centered = np.sum(f(X), axis=1) - X.shape[1] * mus[N].expect(f)
        mean, se = batch_means(centered, n_batches) if len(centered) >= n_batches else (float(centered.mean()),
                                                                                       float("nan"))
        rows.append({"N": int(X.shape[1]), "mean": mean, "mean_se": se, "variance": float(np.var(centered, ddof=1)),
                     "n_samples": int(X.shape[0])})
    return rows
