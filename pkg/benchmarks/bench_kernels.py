"""Compare the compiled and NumPy kernel backends.

Times the single-site Metropolis block, the energy and the gradient on the
same inputs for each backend and checks that both produce identical chains.

    python benchmarks/bench_kernels.py --sizes 50 200 --moves 20000
"""
import argparse
import json
import time

import numpy as np

from betagas.kernels import KernelModel, available_backends
from betagas.model import EnsembleSpec, ExternalField, InteractionPotential
from betagas.samplers import initial_positions


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(N, moves, repeat, with_pair):
    h = InteractionPotential.gaussian(0.1, 1.0) if with_pair else InteractionPotential.zero()
    spec = EnsembleSpec(N, 2.0, ExternalField.gaussian(), h)
    rng = np.random.default_rng(0)
    sites = rng.integers(0, N, moves)
    inc = rng.standard_normal(moves) * (1.0 / N)
    log_u = np.log(rng.random(moves))
    x0 = initial_positions(spec)
    rows, finals = [], {}
    for name in available_backends():
        model = KernelModel(spec, name)
        # python backend is slow; time a slice and scale
        m = moves if name == "cython" else max(moves // 20, 100)

        def run_block():
            x = x0.copy()
            model.metropolis_block(x, sites[:m], inc[:m], log_u[:m])
            return x

        t_block = best_of(run_block, repeat) * moves / m
        t_energy = best_of(lambda: model.energy(x0), repeat)
        t_grad = best_of(lambda: model.gradient(x0), repeat)
        x = x0.copy()
        model.metropolis_block(x, sites[:m], inc[:m], log_u[:m])
        finals[name] = x
        rows.append({"backend": name, "N": N, "pair": with_pair, "moves_per_s": moves / t_block,
                     "energy_us": t_energy * 1e6, "gradient_us": t_grad * 1e6})
    if len(finals) == 2:
        m = max(moves // 20, 100)
        xa, xb = x0.copy(), x0.copy()
        KernelModel(spec, "python").metropolis_block(xa, sites[:m], inc[:m], log_u[:m])
        KernelModel(spec, "cython").metropolis_block(xb, sites[:m], inc[:m], log_u[:m])
        for r in rows:
            r["identical_chain"] = bool(np.array_equal(xa, xb))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 200])
    ap.add_argument("--moves", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args()

    rows = []
    for N in args.sizes:
        for with_pair in (False, True):
            rows.extend(bench(N, args.moves, args.repeat, with_pair))
    print(f"{'backend':>8} {'N':>5} {'pair':>5} {'moves/s':>12} {'energy us':>10} {'grad us':>10} {'same':>5}")
    for r in rows:
        print(f"{r['backend']:>8} {r['N']:>5} {str(r['pair']):>5} {r['moves_per_s']:>12.3g} "
              f"{r['energy_us']:>10.1f} {r['gradient_us']:>10.1f} {str(r.get('identical_chain', '-')):>5}")
    speed = {}
    for r in rows:
        speed.setdefault((r["N"], r["pair"]), {})[r["backend"]] = r["moves_per_s"]
    for (N, pair), s in speed.items():
        if len(s) == 2:
            print(f"N={N} pair={pair}: compiled speedup x{s['cython'] / s['python']:.0f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
