"""Time the compiled x-sweep kernel against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--iters 40000] [--repeat 3] [--workers 1 4]

Both kernels run the same chunked sweep on the random NCQP instance
(20 x 100, 20 blocks, seed 42); the script checks that their final iterates
agree and prints iterations per second for each.
"""

import argparse
import time

import numpy as np

from blocksolve import kernels
from blocksolve.engine import init_state
from blocksolve.problem import gen_ncqp
from blocksolve.sampler import make_streams, sample_subsets
from blocksolve.validate import balanced_rho_x, derive_params


def sweep(mod, problem, config, iters, workers):
    packed = kernels.pack_problem(problem)
    state = init_state(problem)
    samples = sample_subsets(make_streams(config.seed)["sampling"], problem.num_x_blocks,
                             config.n, iters)
    erg_w = np.ones(iters)
    erg_w[0] = 0.0
    t0 = time.perf_counter()
    mod.run_x_chunk(state.x.data, state.erg_x, state.lam, state.r, packed["Q"], packed["c"],
                    packed["At"], packed["offsets"], samples, config.eta_x, packed["prox_kind"],
                    packed["prox_tau"], packed["lo"], packed["hi"], config.rho_x,
                    np.full(iters, config.rho), np.zeros(iters), erg_w, np.zeros((0, 0)),
                    workers)
    return time.perf_counter() - t0, state.x.data.copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=40000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n-sample", type=int, default=1)
    ap.add_argument("--workers", type=int, nargs="+", default=[1])
    args = ap.parse_args(argv)

    problem = gen_ncqp(20, 100, 20, 0, 42)
    config = derive_params(problem, "no-y", args.n_sample, 0, balanced_rho_x(problem))
    candidates = [("numpy", kernels.select(pure=True))]
    if kernels.compiled_available():
        candidates.append(("compiled", kernels.select()))
    else:
        print("compiled kernel not built; timing the fallback only")

    results = {}
    for name, mod in candidates:
        for w in args.workers:
            best, x = min(sweep(mod, problem, config, args.iters, w) for _ in range(args.repeat))
            results[name, w] = (best, x)
            print(f"{name:9s} workers={w}: {best:.3f}s  {args.iters / best:,.0f} it/s")
    ref = results[candidates[0][0], args.workers[0]][1]
    diff = max(float(np.max(np.abs(x - ref))) for _, x in results.values())
    print(f"max |x difference| across kernels: {diff:.2e}")
    if ("compiled", args.workers[0]) in results:
        t_np = results["numpy", args.workers[0]][0]
        t_c = results["compiled", args.workers[0]][0]
        print(f"speedup compiled/numpy: {t_np / t_c:.1f}x")


if __name__ == "__main__":
    main()
