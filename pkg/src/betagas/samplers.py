"""Samplers for the interacting ensemble and the Gaussian beta-ensemble.

Two Markov chains target ``exp(-H)``: a random-scan single-site random-walk
Metropolis chain, whose inner loop lives in the kernel backend, and a
full-vector Langevin (MALA) chain.  Gaussian beta-ensembles are drawn exactly
from the tridiagonal matrix model.  For ``N <= 3`` the one-point function is
available by brute-force quadrature, which the tests use as an oracle.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import logsumexp
from scipy.stats import ks_2samp

from .equilibrium import semicircle_measure
from .kernels import KernelModel
from .model import Configuration, EnsembleSpec, GridMeasure

__all__ = [
    "SamplerError", "Schedule", "ChainState", "ChainRun", "metropolis_chain", "mala_chain",
    "run_chains", "merge_samples", "split_half_ks", "mh_accept_probability",
    "TridiagonalModel", "tridiagonal_gaussian_beta", "tridiagonal_samples", "quadrature_oracle",
    "initial_positions",
]

# random draws per block are sized so the per-call overhead stays negligible
_BLOCK_STEPS = 4096


class SamplerError(RuntimeError):
    """Chain could not be run (e.g. burn-in rejected every proposal)."""


@dataclass(frozen=True)
class Schedule:
    """Run lengths and adaptation settings.

    Lengths count elementary moves: single-site updates for the Metropolis
    chain and full-vector updates for MALA.  ``None`` selects the default for
    the method and ``N`` (see :func:`Schedule.resolved`).
    """

    n_samples: int = 500
    burn_in: int | None = None
    thin: int | None = None
    step_size: float | None = None
    adapt: bool = True
    target_accept: float | None = None
    adapt_interval: int | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        for name in ("burn_in", "thin", "adapt_interval"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < (0 if name == "burn_in" else 1)):
                raise ValueError(f"{name} must be a {'non-negative' if name == 'burn_in' else 'positive'} integer")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.target_accept is not None and not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")

    def resolved(self, N: int, method: str = "metropolis") -> Schedule:
        """Fill defaults: burn-in ``10*N*1000`` and thinning ``N`` for single-site moves."""
        if method == "metropolis":
            burn, thin, target, interval = 10 * N * 1000, N, 0.3, 10 * N
        elif method == "mala":
            burn, thin, target, interval = 10_000, 1, 0.5, 100
        else:
            raise ValueError(f"unknown method {method!r}")
        return replace(
            self,
            burn_in=burn if self.burn_in is None else int(self.burn_in),
            thin=thin if self.thin is None else int(self.thin),
            target_accept=target if self.target_accept is None else self.target_accept,
            adapt_interval=interval if self.adapt_interval is None else int(self.adapt_interval),
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("n_samples", "burn_in", "thin", "step_size", "adapt",
                                             "target_accept", "adapt_interval")}

    @classmethod
    def from_dict(cls, d: dict) -> Schedule:
        return cls(**d)


@dataclass
class ChainState:
    """Resumable chain state, taken at a block boundary."""

    positions: np.ndarray
    step_size: float
    rng_state: dict
    burn_done: int = 0
    burn_accepted: int = 0
    accepted: int = 0
    proposed: int = 0
    samples: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "positions": [float(v) for v in self.positions],
            "step_size": self.step_size,
            "rng_state": self.rng_state,
            "burn_done": self.burn_done,
            "burn_accepted": self.burn_accepted,
            "accepted": self.accepted,
            "proposed": self.proposed,
            "samples": [[float(v) for v in row] for row in self.samples],
        })

    @classmethod
    def from_json(cls, text: str) -> ChainState:
        d = json.loads(text)
        d["positions"] = np.asarray(d["positions"], dtype=float)
        d["samples"] = [np.asarray(row, dtype=float) for row in d["samples"]]
        return cls(**d)


@dataclass
class ChainRun:
    """Output of a chain: retained sorted configurations and run metadata."""

    spec: EnsembleSpec
    seed: int
    method: str
    schedule: Schedule
    step_size: float
    n_steps: int
    burn_in: int
    thin: int
    acceptance_rate: float
    burn_in_acceptance: float
    samples: np.ndarray
    backend: str = ""
    complete: bool = True
    state: ChainState | None = None

    @property
    def configurations(self) -> list[Configuration]:
        return [Configuration(row) for row in self.samples]


def mh_accept_probability(delta_energy, log_proposal_ratio=0.0):
    """Metropolis-Hastings acceptance ``min(1, exp(-dH + log q(x|y) - log q(y|x)))``."""
    a = -np.asarray(delta_energy, dtype=float) + log_proposal_ratio
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(a >= 0, 1.0, np.exp(np.minimum(a, 0.0)))
    return np.where(np.isnan(a), 0.0, out)


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _field_alpha(spec: EnsembleSpec) -> float:
    return float(spec.Q.alpha)


def initial_positions(spec: EnsembleSpec) -> np.ndarray:
    """Semicircle quantiles of the radius matching the convexity of the field."""
    r = math.sqrt(2.0 * spec.beta / _field_alpha(spec))
    mu = semicircle_measure(r, -r, r, 4096)
    x = mu.quantile((np.arange(spec.N) + 0.5) / spec.N)
    if np.any(np.diff(x) <= 0):
        x = x + 1e-9 * np.arange(spec.N)
    return np.ascontiguousarray(x, dtype=float)


def _default_step(spec: EnsembleSpec, method: str) -> float:
    r = math.sqrt(2.0 * spec.beta / _field_alpha(spec))
    if method == "metropolis":
        return r / spec.N
    # MALA: variance of one move comparable to the inverse curvature per coordinate
    return (r / spec.N) ** 2 / max(spec.beta, 1.0)


class _RandomWalkMover:
    """Blocks of single-site moves executed by the kernel backend."""

    method = "metropolis"

    def __init__(self, model: KernelModel):
        self.model = model
        self.N = model.N

    def __call__(self, x, step, rng, n_moves):
        sites = rng.integers(0, self.N, size=n_moves)
        inc = rng.standard_normal(n_moves) * step
        log_u = np.log(rng.random(n_moves))
        return self.model.metropolis_block(x, sites, inc, log_u)


class _LangevinMover:
    """Full-vector Metropolis-adjusted Langevin moves."""

    method = "mala"

    def __init__(self, model: KernelModel):
        self.model = model
        self.N = model.N

    def __call__(self, x, step, rng, n_moves):
        z = rng.standard_normal((n_moves, self.N))
        log_u = np.log(rng.random(n_moves))
        e0 = self.model.energy(x)
        g0 = self.model.gradient(x)
        sd = math.sqrt(step)
        accepted = 0
        for k in range(n_moves):
            mean0 = x - 0.5 * step * g0
            y = mean0 + sd * z[k]
            e1 = self.model.energy(y)
            if not math.isfinite(e1):
                continue
            g1 = self.model.gradient(y)
            mean1 = y - 0.5 * step * g1
            log_q_fwd = -float(np.sum((y - mean0) ** 2)) / (2.0 * step)
            log_q_rev = -float(np.sum((x - mean1) ** 2)) / (2.0 * step)
            if log_u[k] < -(e1 - e0) + (log_q_rev - log_q_fwd):
                x[:] = y
                e0, g0 = e1, g1
                accepted += 1
        return accepted


def _drive(spec: EnsembleSpec, seed: int, schedule: Schedule, mover, *, init=None,
           state: ChainState | None = None, max_steps: int | None = None, checkpoint=None) -> ChainRun:
    method = mover.method
    sch = schedule.resolved(spec.N, method)
    samples_per_block = max(1, _BLOCK_STEPS // sch.thin) if method == "metropolis" else max(1, 256 // sch.thin)
    if state is None:
        rng = _rng(seed)
        x = initial_positions(spec) if init is None else np.array(np.sort(np.asarray(init, float)), dtype=float)
        if len(x) != spec.N:
            raise ValueError("initial configuration has the wrong length")
        step = sch.step_size if sch.step_size is not None else _default_step(spec, method)
        state = ChainState(positions=x, step_size=float(step), rng_state=rng.bit_generator.state)
    else:
        rng = _rng(seed)
        rng.bit_generator.state = state.rng_state
        x = np.array(state.positions, dtype=float)
    samples = list(state.samples)
    steps_run = 0

    def snapshot():
        st = ChainState(positions=x.copy(), step_size=state.step_size, rng_state=rng.bit_generator.state,
                        burn_done=state.burn_done, burn_accepted=state.burn_accepted,
                        accepted=state.accepted, proposed=state.proposed, samples=list(samples))
        if checkpoint is not None:
            checkpoint(st)
        return st

    def interrupted():
        return max_steps is not None and steps_run >= max_steps

    # burn-in with Robbins-Monro adaptation of log(step)
    interval = sch.adapt_interval
    while state.burn_done < sch.burn_in:
        m = min(interval, sch.burn_in - state.burn_done)
        acc = mover(x, state.step_size, rng, m)
        k = state.burn_done // interval
        state.burn_done += m
        state.burn_accepted += acc
        steps_run += m
        if sch.adapt:
            gain = 2.0 / (k + 1) ** 0.6
            state.step_size = float(state.step_size * math.exp(gain * (acc / m - sch.target_accept)))
            if not state.step_size > 1e-300:
                raise SamplerError("step size collapsed during burn-in")
        if interrupted():
            st = snapshot()
            return _finish(spec, seed, sch, method, mover, st, samples, complete=False)
    if sch.burn_in > 0 and state.burn_accepted == 0:
        raise SamplerError("burn-in rejected every proposal; step size is too large")

    while len(samples) < sch.n_samples:
        nb = min(samples_per_block, sch.n_samples - len(samples))
        for _ in range(nb):
            acc = mover(x, state.step_size, rng, sch.thin)
            state.accepted += acc
            state.proposed += sch.thin
            samples.append(np.sort(x))
        steps_run += nb * sch.thin
        if checkpoint is not None or interrupted():
            st = snapshot()
            if interrupted() and len(samples) < sch.n_samples:
                return _finish(spec, seed, sch, method, mover, st, samples, complete=False)
    st = ChainState(positions=x.copy(), step_size=state.step_size, rng_state=rng.bit_generator.state,
                    burn_done=state.burn_done, burn_accepted=state.burn_accepted,
                    accepted=state.accepted, proposed=state.proposed, samples=[])
    return _finish(spec, seed, sch, method, mover, st, samples, complete=True)


def _finish(spec, seed, sch, method, mover, st, samples, complete):
    arr = np.array(samples, dtype=float).reshape(len(samples), spec.N)
    return ChainRun(
        spec=spec, seed=seed, method=method, schedule=sch, step_size=st.step_size,
        n_steps=sch.n_samples * sch.thin, burn_in=sch.burn_in, thin=sch.thin,
        acceptance_rate=st.accepted / st.proposed if st.proposed else float("nan"),
        burn_in_acceptance=st.burn_accepted / st.burn_done if st.burn_done else float("nan"),
        samples=arr, backend=mover.model.backend_name,
        complete=complete, state=st,
    )


def metropolis_chain(spec: EnsembleSpec, seed: int, schedule: Schedule | None = None, *, init=None,
                     backend: str | None = None, state: ChainState | None = None,
                     max_steps: int | None = None, checkpoint=None) -> ChainRun:
    """Random-scan single-site Gaussian random-walk Metropolis chain targeting ``exp(-H)``.

    Parameters
    ----------
    spec : EnsembleSpec
        Target ensemble.  ``spec.Q`` may be an :class:`~betagas.model.EffectiveField`.
    seed : int
        Seed of the PCG64 stream; identical inputs give identical samples.
    schedule : Schedule, optional
        Run lengths; the step size adapts toward acceptance 0.3 during burn-in
        and is frozen afterwards.
    init : array_like, optional
        Starting configuration; semicircle quantiles by default.
    backend : {"cython", "python"}, optional
        Kernel backend; the active one by default.  Both give the same stream.
    state : ChainState, optional
        Resume from a checkpoint produced by an earlier, interrupted call.
    max_steps : int, optional
        Stop (incomplete) at the first block boundary after this many moves.
    checkpoint : callable, optional
        Called with a :class:`ChainState` at every block boundary after burn-in.

    Returns
    -------
    ChainRun
    """
    mover = _RandomWalkMover(KernelModel(spec, backend))
    return _drive(spec, seed, schedule or Schedule(), mover, init=init, state=state,
                  max_steps=max_steps, checkpoint=checkpoint)


def mala_chain(spec: EnsembleSpec, seed: int, schedule: Schedule | None = None, *, init=None,
               backend: str | None = None, state: ChainState | None = None,
               max_steps: int | None = None, checkpoint=None) -> ChainRun:
    """Metropolis-adjusted Langevin chain with drift ``-(step/2) grad H``.

    For ``beta < 1`` the gradient drift is unreliable near coincidences, so
    the call falls through to :func:`metropolis_chain`.  Proposals landing on a
    coincidence have infinite energy and are rejected.
    """
    if spec.beta < 1:
        return metropolis_chain(spec, seed, schedule, init=init, backend=backend, state=state,
                                max_steps=max_steps, checkpoint=checkpoint)
    mover = _LangevinMover(KernelModel(spec, backend))
    return _drive(spec, seed, schedule or Schedule(), mover, init=init, state=state,
                  max_steps=max_steps, checkpoint=checkpoint)


def run_chains(spec: EnsembleSpec, seeds, schedule: Schedule | None = None, method: str = "metropolis",
               threads: int = 1, backend: str | None = None) -> list[ChainRun]:
    """Independent chains, one per seed, returned in seed order."""
    fn = {"metropolis": metropolis_chain, "mala": mala_chain}[method]
    seeds = list(seeds)
    if threads <= 1 or len(seeds) == 1:
        return [fn(spec, s, schedule, backend=backend) for s in seeds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda s: fn(spec, s, schedule, backend=backend), seeds))


def merge_samples(runs) -> np.ndarray:
    """Stack retained configurations of several runs (rows stay sorted)."""
    return np.vstack([r.samples for r in runs])


def split_half_ks(samples) -> float:
    """KS distance between the pooled positions of the first and second half of a chain."""
    samples = np.asarray(samples)
    h = len(samples) // 2
    return float(ks_2samp(samples[:h].ravel(), samples[h:2 * h].ravel()).statistic)


# ---------------------------------------------------------------------------
# Gaussian beta-ensemble
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TridiagonalModel:
    """Random symmetric tridiagonal matrix whose eigenvalues follow the beta-ensemble.

    With diagonal entries ``N(0, 1)`` and off-diagonal entries
    ``chi_{beta (N-k)} / sqrt(2)`` the eigenvalue density is proportional to
    ``prod |l_i - l_j|^beta exp(-sum l^2 / 2)``; the map ``x = l / sqrt(2 N)``
    turns this into ``exp(-N sum x^2)``.
    """

    N: int
    beta: float
    diagonal: np.ndarray
    offdiagonal: np.ndarray

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(2.0 * self.N)

    @classmethod
    def draw(cls, N: int, beta: float, rng: np.random.Generator) -> TridiagonalModel:
        if int(N) != N or N < 1:
            raise ValueError("N must be a positive integer")
        if not beta > 0:
            raise ValueError("beta must be positive")
        diag = rng.standard_normal(N)
        dof = beta * np.arange(N - 1, 0, -1)
        off = np.sqrt(rng.chisquare(dof)) / math.sqrt(2.0) if N > 1 else np.empty(0)
        return cls(int(N), float(beta), diag, off)

    def eigenvalues(self) -> np.ndarray:
        if self.N == 1:
            return self.diagonal * self.scale
        return np.sort(eigvalsh_tridiagonal(self.diagonal, self.offdiagonal)) * self.scale


def tridiagonal_gaussian_beta(N: int, beta: float, seed) -> Configuration:
    """One draw from the density proportional to ``prod |x_i - x_j|^beta exp(-N sum x^2)``."""
    return Configuration(TridiagonalModel.draw(N, beta, _rng(seed)).eigenvalues())


def tridiagonal_samples(N: int, beta: float, n_draws: int, seed) -> np.ndarray:
    """``n_draws`` sorted configurations from one seeded stream, shape ``(n_draws, N)``."""
    rng = _rng(seed)
    return np.array([TridiagonalModel.draw(N, beta, rng).eigenvalues() for _ in range(n_draws)])


# ---------------------------------------------------------------------------
# brute-force one-point function
# ---------------------------------------------------------------------------


def quadrature_oracle(spec: EnsembleSpec, grid=(-4.0, 4.0, 1600)) -> GridMeasure:
    """One-point function of a tiny ensemble by tensor-product quadrature.

    The unnormalized density ``exp(-H)`` is summed over the remaining
    coordinates on the midpoint grid and normalized, giving cell masses of the
    marginal density of ``x_1`` (equivalently the normalized one-point function).

    Parameters
    ----------
    spec : EnsembleSpec
        Ensemble with ``N <= 3``.
    grid : (left, right, n_cells)
        Midpoint grid; should cover the bulk of the law.
    """
    if spec.N > 3:
        raise ValueError("quadrature oracle is limited to N <= 3")
    left, right, n = grid
    mu = GridMeasure.uniform(left, right, n)
    t = mu.midpoints
    N, beta = spec.N, spec.beta
    one = N * np.asarray(spec.Q(t), dtype=float)
    if N == 1:
        logw = -one
    else:
        d = t[:, None] - t[None, :]
        with np.errstate(divide="ignore"):
            pair = -beta * np.log(np.abs(d))
        if not spec.h.is_zero:
            pair = pair + spec.h(d)
        e2 = one[:, None] + one[None, :] + pair
        if N == 2:
            logw = logsumexp(-e2, axis=1)
        else:
            # sum over (y, z) for every t: exp(-(e(t,y) + one(z) + pair(t,z) + pair(y,z)))
            logw = np.empty(n)
            for i in range(n):
                a = -(e2[i][:, None] + one[None, :] + pair[i][None, :] + pair)
                logw[i] = logsumexp(a, axis=None)
    logw = logw - np.max(logw)
    return GridMeasure.from_unnormalized(left, right, np.exp(logw))

