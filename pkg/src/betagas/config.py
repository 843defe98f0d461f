"""Experiment configuration (TOML).

Schema (all sections optional; missing keys take the defaults below)::

    [run]         seed, threads, version
    [ensemble]    N, beta, interaction = [[amplitude, width], ...]
    [ensemble.field]  kind, coefficients, domain_bound
    [grid]        n_cells, left, right            (window defaults to [-3 r0, 3 r0])
    [solver]      mode ("self-consistent" | "plain"), tol, self_consistent_tol, damping, max_iter
    [chain]       method, targets, n_chains, n_samples, burn_in, thin, step_size,
                  gaussian_draws, checkpoint_every
    [stats]       k, xi, a, a_ref, center_half_width, pair_half_width, bandwidth,
                  test_function, bulk_fraction
    [compare]     reference, reference_beta, negative_control, n_se, spacing_ks_max, density_l1_max

Keys left unset are omitted when serializing, so ``parse(serialize(c)) == c``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from dataclasses import field as _field

import tomli
import tomli_w

from .model import ExternalField, InteractionPotential, EnsembleSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "dump_config"]

MANIFEST_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class RunSection:
    seed: int = 12345
    threads: int = 1
    version: int = MANIFEST_VERSION


@dataclass
class FieldSection:
    kind: str = "gaussian"
    coefficients: list = _field(default_factory=lambda: [1.0])
    domain_bound: float = 4.0


@dataclass
class EnsembleSection:
    N: int = 200
    beta: float = 2.0
    field: FieldSection = _field(default_factory=FieldSection)
    interaction: list = _field(default_factory=list)


@dataclass
class GridSection:
    n_cells: int = 1024
    left: float | None = None
    right: float | None = None


@dataclass
class SolverSection:
    mode: str = "self-consistent"
    tol: float = 1e-9
    self_consistent_tol: float = 1e-6
    damping: float = 0.5
    max_iter: int = 200


@dataclass
class ChainSection:
    method: str = "metropolis"
    targets: list = _field(default_factory=lambda: ["modified", "gaussian"])
    n_chains: int = 4
    n_samples: int = 125
    burn_in: int | None = None
    thin: int | None = None
    step_size: float | None = None
    gaussian_draws: int = 500
    checkpoint_every: int = 0


@dataclass
class StatsSection:
    k: list = _field(default_factory=lambda: [1, 2])
    xi: float = 0.5
    a: float = 0.0
    a_ref: float = 0.0
    center_half_width: float = 1.0
    pair_half_width: float = 2.0
    bandwidth: float | None = None
    test_function: str = "cos"
    bulk_fraction: float = 0.6


@dataclass
class CompareSection:
    reference: str = "gaussian"
    reference_beta: float | None = None
    negative_control: bool = False
    n_se: float = 3.0
    spacing_ks_max: float = 0.03
    density_l1_max: float = 0.05


_SECTIONS = {
    "run": RunSection, "ensemble": EnsembleSection, "grid": GridSection, "solver": SolverSection,
    "chain": ChainSection, "stats": StatsSection, "compare": CompareSection,
}


@dataclass
class ExperimentConfig:
    run: RunSection = _field(default_factory=RunSection)
    ensemble: EnsembleSection = _field(default_factory=EnsembleSection)
    grid: GridSection = _field(default_factory=GridSection)
    solver: SolverSection = _field(default_factory=SolverSection)
    chain: ChainSection = _field(default_factory=ChainSection)
    stats: StatsSection = _field(default_factory=StatsSection)
    compare: CompareSection = _field(default_factory=CompareSection)

    # -- derived objects ---------------------------------------------------

    def external_field(self) -> ExternalField:
        f = self.ensemble.field
        return ExternalField(f.kind, tuple(f.coefficients), f.domain_bound)

    def interaction(self) -> InteractionPotential:
        return InteractionPotential.from_list(self.ensemble.interaction)

    def spec(self) -> EnsembleSpec:
        return EnsembleSpec(self.ensemble.N, self.ensemble.beta, self.external_field(), self.interaction())

    @property
    def reference_beta(self) -> float:
        c = self.compare
        return self.ensemble.beta if c.reference_beta is None else c.reference_beta

    def to_dict(self) -> dict:
        return _strip_none(asdict(self))

    def validate(self):
        """Raise :class:`ConfigError` naming the first offending field."""
        e, s, c, ch = self.ensemble, self.solver, self.compare, self.chain
        _check(isinstance(e.N, int) and e.N >= 1, "ensemble.N", "positive integer")
        _check(_num(e.beta) and e.beta > 0, "ensemble.beta", "positive number")
        _check(e.field.kind in ("gaussian", "even-polynomial", "gaussian-plus-bump"), "ensemble.field.kind",
               "one of gaussian, even-polynomial, gaussian-plus-bump")
        _check(isinstance(e.field.coefficients, list) and all(_num(v) for v in e.field.coefficients),
               "ensemble.field.coefficients", "list of numbers")
        _check(isinstance(e.interaction, list)
               and all(isinstance(t, list) and len(t) == 2 and all(_num(v) for v in t) for t in e.interaction),
               "ensemble.interaction", "list of [amplitude, width] pairs")
        _check(isinstance(self.grid.n_cells, int) and self.grid.n_cells >= 64, "grid.n_cells", "integer >= 64")
        _check((self.grid.left is None) == (self.grid.right is None), "grid.left", "set together with grid.right")
        _check(s.mode in ("self-consistent", "plain"), "solver.mode", "'self-consistent' or 'plain'")
        _check(_num(s.tol) and s.tol > 0, "solver.tol", "positive number")
        _check(_num(s.damping) and 0 < s.damping <= 1, "solver.damping", "number in (0, 1]")
        _check(ch.method in ("metropolis", "mala"), "chain.method", "'metropolis' or 'mala'")
        _check(isinstance(ch.targets, list) and set(ch.targets) <= {"modified", "gaussian", "comparison"},
               "chain.targets", "subset of modified, gaussian, comparison")
        for name in ("n_chains", "n_samples", "gaussian_draws"):
            v = getattr(ch, name)
            _check(isinstance(v, int) and v >= 1, f"chain.{name}", "positive integer")
        _check(isinstance(self.stats.k, list) and set(self.stats.k) <= {1, 2, 3}, "stats.k", "subset of 1, 2, 3")
        _check(_num(self.stats.xi) and 0 < self.stats.xi <= 0.5, "stats.xi", "number in (0, 1/2]")
        _check(c.reference in ("gaussian", "comparison"), "compare.reference", "'gaussian' or 'comparison'")
        _check(isinstance(self.run.seed, int) and 0 <= self.run.seed < 2 ** 64, "run.seed", "unsigned 64-bit integer")
        try:
            self.spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"ensemble: {exc}") from exc
        return self


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check(ok, where, expected):
    if not ok:
        raise ConfigError(f"field '{where}': expected {expected}")


def _strip_none(d):
    if isinstance(d, dict):
        return {k: _strip_none(v) for k, v in d.items() if v is not None}
    return d


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"field '{where}': expected a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"field '{where}.{sorted(unknown)[0]}': unknown key")
    kwargs = {}
    for k, v in data.items():
        if cls is EnsembleSection and k == "field":
            v = _build(FieldSection, v, f"{where}.field")
        elif isinstance(getattr(cls(), k), float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        kwargs[k] = v
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    """Parse TOML text; errors carry the line (syntax) or field path (schema)."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"field '{sorted(unknown)[0]}': unknown section")
    kwargs = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return ExperimentConfig(**kwargs).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())
