"""Compiled kernels against the numpy fallback.

Times both ALC evaluators on random local designs, plus one end-to-end
borehole emulation, for every available backend.

    python3 benchmarks/bench_kernels.py            # j up to 512, N'=60000
    python3 benchmarks/bench_kernels.py --quick    # small sizes, a few seconds
"""

import argparse
import time

import numpy as np

from lagp import available_backends
from lagp.alc import CandidateSet, alc_scores_batch, alc_scores_serial
from lagp.data import LhsSpec, borehole, lhs_sample
from lagp.emulate import EmulationJob, emulate
from lagp.gp import Design, Hyperparameters, build_gp
from lagp.local import LocalDesignParams


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def state_for(j, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((j, p))
    return build_gp(Design(X, rng.standard_normal(j)), Hyperparameters(0.05, 1e-6)), rng


def kernel_rows(sizes, n_cands, p, repeat, backends):
    for j in sizes:
        state, rng = state_for(j, p, j)
        x = rng.random(p)
        C = CandidateSet(rng.random((n_cands, p)), np.arange(j, j + n_cands))
        for name, score in (("serial", alc_scores_serial), ("batch", alc_scores_batch)):
            t = {b: best_of(repeat, lambda: score(state, x, C, check=False, backend=b)) for b in backends}
            yield j, name, t


def emulate_row(N, M, backends):
    X = lhs_sample(LhsSpec(N, 8, 1))
    P = lhs_sample(LhsSpec(M, 8, 2))
    design = Design(X, borehole(X))
    params = LocalDesignParams(n=40, n_close=200)
    return {b: best_of(1, lambda: emulate(EmulationJob(design, P, params, backend=b))) for b in backends}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16,32,64,128,256,512", help="local design sizes j")
    ap.add_argument("--candidates", type=int, default=60000, help="candidate set size N'")
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="j in 16,64 with N'=5000")
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    n_cands, repeat = args.candidates, args.repeat
    if args.quick:
        sizes, n_cands, repeat = [16, 64], 5000, 1

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the numpy fallback only")
    head = f"{'j':>5} {'evaluator':>9} " + " ".join(f"{b + ' s':>12}" for b in backends)
    if len(backends) == 2:
        head += f" {'speedup':>8}"
    print(f"ALC scoring, N'={n_cands}, p={args.p}, best of {repeat}")
    print(head)
    for j, name, t in kernel_rows(sizes, n_cands, args.p, repeat, backends):
        line = f"{j:>5} {name:>9} " + " ".join(f"{t[b]:>12.4f}" for b in backends)
        if len(backends) == 2:
            line += f" {t['pure'] / t['compiled']:>7.1f}x"
        print(line, flush=True)

    N, M = (1000, 20) if args.quick else (4000, 200)
    t = emulate_row(N, M, backends)
    print(f"\nborehole emulation, N={N}, M={M}, n=40, N'=200")
    print(" ".join(f"{b}: {t[b]:.2f}s" for b in backends)
          + (f"  speedup {t['pure'] / t['compiled']:.1f}x" if len(backends) == 2 else ""))


if __name__ == "__main__":
    main()
