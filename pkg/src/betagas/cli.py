"""Command-line harness: ``betagas {eqsolve,sample,stats,compare,validate}``.

All subcommands share one run directory (``--out``).  ``eqsolve`` writes the
limiting measure, ``sample`` the configurations, ``stats`` and ``compare`` the
tables and figures; ``manifest.json`` records the config and a hash of every
file so a run can be reproduced and checked.

Exit codes: 0 success, 1 config error, 2 solver failure, 3 missing artifact
from an earlier stage, 4 incompatible inputs, 5 a check or verdict failed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io, plots
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .equilibrium import (EquilibriumError, EquilibriumProblem, default_grid, self_consistent_solve,
                          solve_equilibrium)
from .kernels import BACKEND
from .model import EffectiveField, EnsembleSpec, ExternalField, InteractionPotential
from .samplers import ChainState, Schedule, mala_chain, metropolis_chain, split_half_ks, tridiagonal_samples
from .statistics import (BumpProduct, TestFunction, averaged_correlation, bulk_gaps, concentration_check,
                         empirical_density, estimate_dirichlet, exp_moment_diagnostic, sine_kernel_pair_reference,
                         spacing_histogram, spacing_ks)

log = logging.getLogger("betagas")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MISSING, EXIT_INCOMPATIBLE, EXIT_FAILED = 0, 1, 2, 3, 4, 5

SOLUTION = "solution.csv"
REFERENCE_SOLUTION = "reference_solution.csv"


class HarnessError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def samples_file(target: str) -> str:
    return f"samples_{target}.csv"


def spec_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def chain_seed(seed: int, target: str, index: int) -> int:
    """Per-chain 64-bit seed derived from the run seed, the target and the chain index."""
    tag = {"modified": 0, "comparison": 1, "gaussian": 2}[target]
    return int(np.random.SeedSequence([seed, tag, index]).generate_state(1, np.uint64)[0])


def _grid(cfg: ExperimentConfig, Q, beta):
    if cfg.grid.left is not None:
        return cfg.grid.left, cfg.grid.right, cfg.grid.n_cells
    return default_grid(Q, beta, cfg.grid.n_cells)


def _manifest(cfg, out: Path):
    m = io.Manifest(out)
    m.set("version", cfg.run.version)
    m.set("package_version", __version__)
    m.set("config", cfg.to_dict())
    m.set("backend", BACKEND)
    m.set("platform", {"python": platform.python_version(), "numpy": np.__version__})
    return m


def _write_config(cfg, out: Path):
    (out / "config.toml").write_text(dump_config(cfg))


# ---------------------------------------------------------------------------
# eqsolve
# ---------------------------------------------------------------------------


def solve_for_config(cfg: ExperimentConfig):
    """Limiting measure of the configured ensemble (plain or self-consistent)."""
    Q, h, beta = cfg.external_field(), cfg.interaction(), cfg.ensemble.beta
    grid = _grid(cfg, Q, beta)
    s = cfg.solver
    if s.mode == "plain" or h.is_zero:
        # a zero interaction makes the fixed point the plain solve itself
        if s.mode == "self-consistent":
            return self_consistent_solve(Q, h, beta, grid, s.self_consistent_tol, s.damping, solver_tol=s.tol)
        return solve_equilibrium(EquilibriumProblem.from_field(Q, beta, *grid), s.tol, max_enlarge=0)
    return self_consistent_solve(Q, h, beta, grid, s.self_consistent_tol, s.damping, solver_tol=s.tol,
                                 max_iter=s.max_iter)


def reference_solution(cfg: ExperimentConfig):
    """Equilibrium measure of the Gaussian reference ensemble (field ``t^2``) at the reference beta."""
    G = ExternalField.gaussian()
    beta = cfg.reference_beta
    grid = default_grid(G, beta, cfg.grid.n_cells)
    return solve_equilibrium(EquilibriumProblem.from_field(G, beta, *grid), cfg.solver.tol, max_enlarge=0)


def cmd_eqsolve(cfg: ExperimentConfig, out: Path) -> int:
    try:
        sol = solve_for_config(cfg)
        ref = reference_solution(cfg)
    except EquilibriumError as exc:
        raise HarnessError(f"equilibrium solver failed: {exc} (residual {exc.residual:.3g})", EXIT_SOLVER)
    header = {"beta": cfg.ensemble.beta, "field": cfg.ensemble.field.__dict__, "interaction": cfg.ensemble.interaction,
              "el_residual": sol.el_residual, "lagrange_constant": sol.lagrange_constant}
    io.write_solution(out / SOLUTION, sol, header)
    io.write_solution(out / REFERENCE_SOLUTION, ref, {"beta": cfg.reference_beta, "field": "gaussian",
                                                       "el_residual": ref.el_residual,
                                                       "lagrange_constant": ref.lagrange_constant})
    lo, hi = sol.support
    lines = [
        f"mode: {cfg.solver.mode}",
        f"grid: [{sol.mu.left:.6g}, {sol.mu.right:.6g}] with {sol.mu.n_cells} cells (dx = {sol.mu.dx:.4g})",
        f"support: [{lo:.6f}, {hi:.6f}]",
        f"euler_lagrange_residual: {sol.el_residual:.3e}",
        f"lagrange_constant: {sol.lagrange_constant:.10g}",
        f"iterations: {sol.iterations}",
    ]
    if sol.self_consistency_residual is not None:
        lines.append(f"self_consistency_residual: {sol.self_consistency_residual:.3e}")
    rlo, rhi = ref.support
    lines.append(f"reference (beta={cfg.reference_beta:g}) support: [{rlo:.6f}, {rhi:.6f}], "
                 f"residual {ref.el_residual:.3e}")
    report = "\n".join(lines) + "\n"
    (out / "eqsolve_report.txt").write_text(report)
    print(report, end="")
    plots.density_overlay(out / "equilibrium.svg", {"limiting measure": sol.mu, "Gaussian reference": ref.mu})
    m = _manifest(cfg, out)
    m.record("eqsolve", {"el_residual": sol.el_residual, "support": [lo, hi]},
             [SOLUTION, REFERENCE_SOLUTION, "eqsolve_report.txt", "equilibrium.svg"])
    m.save()
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def _load_solution(out: Path, name=SOLUTION):
    path = out / name
    if not path.exists():
        raise HarnessError(f"missing {path}; run `betagas eqsolve` with the same --out first", EXIT_MISSING)
    return io.read_solution(path)[1]


def target_spec(cfg: ExperimentConfig, target: str, out: Path) -> EnsembleSpec:
    base = cfg.spec()
    if target == "modified":
        return base
    if target == "comparison":
        mu = _load_solution(out)
        V = EffectiveField(base.Q, base.h, mu)
        return EnsembleSpec(base.N, base.beta, V, InteractionPotential.zero())
    raise ValueError(target)


def _schedule(cfg: ExperimentConfig) -> Schedule:
    c = cfg.chain
    return Schedule(n_samples=c.n_samples, burn_in=c.burn_in, thin=c.thin, step_size=c.step_size)


def _run_target_chains(cfg, target, out: Path, resume: bool, stop_after):
    spec = target_spec(cfg, target, out)
    fn = metropolis_chain if cfg.chain.method == "metropolis" else mala_chain
    schedule = _schedule(cfg)
    seeds = [chain_seed(cfg.run.seed, target, i) for i in range(cfg.chain.n_chains)]

    def one(i):
        state_path = out / f"state_{target}_{i}.json"
        state = ChainState.from_json(state_path.read_text()) if resume and state_path.exists() else None
        every = cfg.chain.checkpoint_every
        counter = [0]

        def checkpoint(st):
            counter[0] += 1
            if every and counter[0] % every == 0:
                state_path.write_text(st.to_json())

        run = fn(spec, seeds[i], schedule, state=state, max_steps=stop_after, checkpoint=checkpoint)
        if not run.complete:
            state_path.write_text(run.state.to_json())
        return run

    threads = max(1, cfg.run.threads)
    if threads == 1:
        runs = [one(i) for i in range(len(seeds))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            runs = list(ex.map(one, range(len(seeds))))
    return spec, seeds, runs


def cmd_sample(cfg: ExperimentConfig, out: Path, resume: bool = False, stop_after: int | None = None,
               targets=None) -> int:
    targets = list(targets or cfg.chain.targets)
    written, info, interrupted = [], {}, []
    for target in targets:
        if target == "gaussian":
            N, beta = cfg.ensemble.N, cfg.reference_beta
            seed = chain_seed(cfg.run.seed, target, 0)
            X = tridiagonal_samples(N, beta, cfg.chain.gaussian_draws, seed)
            header = {"target": target, "N": N, "beta": beta, "field": {"kind": "gaussian", "coefficients": [1.0]},
                      "interaction": [], "seed": cfg.run.seed, "chain_seeds": [seed],
                      "schedule": {"draws": cfg.chain.gaussian_draws}, "method": "tridiagonal"}
            m2 = (X ** 2).mean(axis=1)
            summary = {"second_moment": float(m2.mean()), "second_moment_se": float(m2.std(ddof=1) / np.sqrt(len(m2)))}
        else:
            spec, seeds, runs = _run_target_chains(cfg, target, out, resume, stop_after)
            if not all(r.complete for r in runs):
                interrupted.append(target)
                continue
            X = np.vstack([r.samples for r in runs])
            header = {"target": target, "N": spec.N, "beta": spec.beta, "field": spec.Q.to_dict(),
                      "interaction": spec.h.to_list(), "seed": cfg.run.seed, "chain_seeds": seeds,
                      "schedule": runs[0].schedule.to_dict(), "method": runs[0].method,
                      "step_sizes": [r.step_size for r in runs],
                      "acceptance_rates": [r.acceptance_rate for r in runs]}
            summary = {"acceptance_rates": [r.acceptance_rate for r in runs],
                       "split_half_ks": [split_half_ks(r.samples) for r in runs]}
            for i in range(len(runs)):
                (out / f"state_{target}_{i}.json").unlink(missing_ok=True)
        name = samples_file(target)
        io.write_samples(out / name, X, header)
        written.append(name)
        info[target] = summary
        print(f"{target}: {X.shape[0]} configurations of N={X.shape[1]} -> {name}; "
              + ", ".join(f"{k}={_short(v)}" for k, v in summary.items()))
    if interrupted:
        print(f"interrupted: {', '.join(interrupted)}; chain state saved, rerun with --resume")
    m = _manifest(cfg, out)
    if written:
        m.record("sample", {"summary": info, "interrupted": interrupted}, written)
    m.save()
    return EXIT_OK


def _short(v):
    if isinstance(v, list):
        return "[" + ", ".join(f"{x:.3g}" for x in v) + "]"
    return f"{v:.4g}"


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def _load_samples(out: Path, target: str):
    path = out / samples_file(target)
    if not path.exists():
        raise HarnessError(f"missing {path}; run `betagas sample` first", EXIT_MISSING)
    return io.read_samples(path)


def _measure_for(out: Path, target: str):
    return _load_solution(out, REFERENCE_SOLUTION if target == "gaussian" else SOLUTION)


def _test_function(cfg, k):
    s = cfg.stats
    return BumpProduct(s.center_half_width, (s.pair_half_width,) * (k - 1))


def cmd_stats(cfg: ExperimentConfig, out: Path) -> int:
    present = [t for t in ("modified", "comparison", "gaussian") if (out / samples_file(t)).exists()]
    if not present:
        raise HarnessError("no sample files; run `betagas sample` first", EXIT_MISSING)
    rows, hists, files = [], {}, []
    s = cfg.stats
    for target in present:
        header, X = _load_samples(out, target)
        mu = _measure_for(out, target)
        N = X.shape[1]
        tag = spec_hash({k: header[k] for k in ("N", "beta", "field", "interaction")})
        dens = empirical_density(X, mu, s.bandwidth)
        rows.append(("density_l1", target, N, tag, dens.l1_distance(mu), float("nan")))
        plots.density_overlay(out / f"density_{target}.svg", {"empirical": dens, "limiting": mu}, target)
        files.append(f"density_{target}.svg")
        a = s.a_ref if target == "gaussian" else s.a
        for k in s.k:
            est = averaged_correlation(X, k, a, s.xi, _test_function(cfg, k), mu=mu)
            rows.append((f"correlation_k{k}", target, N, tag, est.value, est.std_error))
        gaps = bulk_gaps(X, mu, s.bulk_fraction)
        rows.append(("mean_gap", target, N, tag, float(gaps.mean()), float(gaps.std() / np.sqrt(len(gaps)))))
        hists[target] = spacing_histogram(gaps)
        conc = concentration_check(TestFunction(s.test_function), {N: X}, {N: mu})[0]
        rows.append((f"linear_{s.test_function}_mean", target, N, tag, conc["mean"], conc["mean_se"]))
        rows.append((f"linear_{s.test_function}_variance", target, N, tag, conc["variance"], float("nan")))
        if target == "comparison":
            h = cfg.interaction()
            d = estimate_dirichlet(X, h, mu)
            lo, est, hi = exp_moment_diagnostic(X, h, mu, 1.0)
            rows.append(("dirichlet", target, N, tag, d.value, float("nan")))
            rows.append(("exp_moment", target, N, tag, est, (hi - lo) / 6.0))
    io.write_table(out / "stats.csv", ["statistic", "target", "N", "spec_hash", "value", "std_error"],
                   [(r[0], r[1], str(r[2]), r[3], r[4], r[5]) for r in rows])
    plots.spacing_histograms(out / "spacings.svg", hists)
    files += ["stats.csv", "spacings.svg"]
    for r in rows:
        print(f"{r[0]:>24s} {r[1]:>10s} N={r[2]:<4d} {r[4]: .6g}" + (f" +- {r[5]:.3g}" if r[5] == r[5] else ""))
    m = _manifest(cfg, out)
    m.record("stats", {"targets": present}, files)
    m.save()
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def compare_samples(cfg, X, mu, Y, nu, beta_ref):
    """Checks of the modified ensemble ``X`` (measure ``mu``) against the reference ``Y`` (``nu``)."""
    s, c = cfg.stats, cfg.compare
    checks = []
    a_ref = s.a_ref if cfg.compare.reference == "gaussian" else s.a
    for k in s.k:
        f = _test_function(cfg, k)
        e1 = averaged_correlation(X, k, s.a, s.xi, f, mu=mu)
        e2 = averaged_correlation(Y, k, a_ref, s.xi, f, mu=nu)
        se = float(np.hypot(e1.std_error, e2.std_error))
        diff = e1.value - e2.value
        checks.append({"check": f"correlation_k{k}", "value": diff, "threshold": c.n_se * se,
                       "passed": abs(diff) <= c.n_se * se,
                       "detail": f"{e1.value:.5f} +- {e1.std_error:.5f} vs {e2.value:.5f} +- {e2.std_error:.5f}"})
        if k == 2 and beta_ref == 2 and cfg.compare.reference == "gaussian":
            ref = sine_kernel_pair_reference(f.pair[0])
            checks.append({"check": "sine_kernel_k2", "value": e2.value - ref, "threshold": c.n_se * e2.std_error,
                           "passed": abs(e2.value - ref) <= c.n_se * e2.std_error,
                           "detail": f"reference {e2.value:.5f} +- {e2.std_error:.5f} vs sine kernel {ref:.5f}"})
    gx, gy = bulk_gaps(X, mu, s.bulk_fraction), bulk_gaps(Y, nu, s.bulk_fraction)
    ks = spacing_ks(gx, gy)
    checks.append({"check": "spacing_ks", "value": ks, "threshold": c.spacing_ks_max, "passed": ks <= c.spacing_ks_max,
                   "detail": f"{len(gx)} vs {len(gy)} bulk gaps"})
    l1 = empirical_density(X, mu, s.bandwidth).l1_distance(mu)
    checks.append({"check": "density_l1", "value": l1, "threshold": c.density_l1_max, "passed": l1 <= c.density_l1_max,
                   "detail": "empirical one-point density of the modified ensemble vs its limiting measure"})
    return checks, (gx, gy)


def cmd_compare(cfg: ExperimentConfig, out: Path) -> int:
    ref_target = cfg.compare.reference
    hx, X = _load_samples(out, "modified")
    hy, Y = _load_samples(out, ref_target)
    mu, nu = _measure_for(out, "modified"), _measure_for(out, ref_target)
    if hx["N"] != hy["N"]:
        raise HarnessError(f"incompatible inputs: N={hx['N']} vs N={hy['N']}", EXIT_INCOMPATIBLE)
    if hx["beta"] != hy["beta"] and not cfg.compare.negative_control:
        raise HarnessError(f"incompatible inputs: beta={hx['beta']} vs beta={hy['beta']} "
                           "(set compare.negative_control = true to compare anyway)", EXIT_INCOMPATIBLE)
    checks, (gx, gy) = compare_samples(cfg, X, mu, Y, nu, hy["beta"])
    verdict = all(ch["passed"] for ch in checks)
    io.write_table(out / "compare.csv", ["check", "value", "threshold", "passed"],
                   [(ch["check"], ch["value"], ch["threshold"], "1.0" if ch["passed"] else "0.0") for ch in checks])
    lines = [f"modified (N={hx['N']}, beta={hx['beta']:g}) vs {ref_target} (N={hy['N']}, beta={hy['beta']:g})"]
    if cfg.compare.negative_control:
        lines.append("negative control: the two ensembles differ on purpose; FAIL is the expected verdict")
    for ch in checks:
        lines.append(f"{'PASS' if ch['passed'] else 'FAIL'}  {ch['check']:<16s} {ch['value']: .5f} "
                     f"(limit {ch['threshold']:.5f})  {ch['detail']}")
    lines.append(f"verdict: {'PASS' if verdict else 'FAIL'}")
    report = "\n".join(lines) + "\n"
    (out / "compare_report.txt").write_text(report)
    print(report, end="")
    plots.spacing_histograms(out / "compare_spacings.svg",
                             {f"modified beta={hx['beta']:g}": spacing_histogram(gx),
                              f"{ref_target} beta={hy['beta']:g}": spacing_histogram(gy)})
    m = _manifest(cfg, out)
    m.record("compare", {"verdict": "PASS" if verdict else "FAIL", "checks": checks},
             ["compare.csv", "compare_report.txt", "compare_spacings.svg"])
    m.save()
    return EXIT_OK if verdict else EXIT_FAILED


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(only=None) -> int:
    from .acceptance import run_criteria
    results = run_criteria(only, echo=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config (defaults apply when omitted)")
    common.add_argument("--out", type=Path, default=Path("run"), help="run directory (default: ./run)")
    common.add_argument("--seed", type=int, help="override run.seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="override run.threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="betagas", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eqsolve", parents=[common], help="solve for the limiting measure")
    p = sub.add_parser("sample", parents=[common], help="draw configurations")
    p.add_argument("--target", action="append", choices=["modified", "comparison", "gaussian"],
                   help="restrict to these targets (repeatable)")
    p.add_argument("--resume", action="store_true", help="continue interrupted chains from saved state")
    p.add_argument("--stop-after", type=int, metavar="STEPS",
                   help="interrupt every chain after STEPS moves and save its state")
    sub.add_parser("stats", parents=[common], help="estimators on the sample files")
    sub.add_parser("compare", parents=[common], help="modified vs reference ensemble verdict")
    p = sub.add_parser("validate", parents=[common], help="run the acceptance criteria")
    p.add_argument("--only", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated criterion numbers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", category=RuntimeWarning)
    try:
        if args.command == "validate":
            return cmd_validate(args.only)
        cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
        if args.seed is not None:
            cfg.run.seed = args.seed
        if args.threads is not None:
            cfg.run.threads = args.threads
        cfg.validate()
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        _write_config(cfg, out)
        if args.command == "eqsolve":
            return cmd_eqsolve(cfg, out)
        if args.command == "sample":
            return cmd_sample(cfg, out, args.resume, args.stop_after, args.target)
        if args.command == "stats":
            return cmd_stats(cfg, out)
        if args.command == "compare":
            return cmd_compare(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except io.MissingArtifactError as exc:
        print(f"error: missing artifact {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
