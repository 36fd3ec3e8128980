"""Compiled vs pure-Python kernels on the IBM and LV workloads.

    python benchmarks/bench_kernels.py [--repeats 3] [--quick]

Each row is the best wall time over the repeats; both backends run the
same seeds and produce identical output, so only speed differs.
"""
import argparse
import time

import numpy as np

from adaptdyn import _kernels
from adaptdyn.ibm import PopulationState, simulate
from adaptdyn.lotka_volterra import build_lv, integrate, long_run_limit
from adaptdyn.model import GaussianExample


def best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def ibm_case(K, t_end):
    m = GaussianExample(0.9, 0.7, 0.05, p=0.1).to_model(K=K, u_K=1e-3)
    init = PopulationState.monomorphic(-0.5, int(0.55 * K), K)

    def run(backend):
        return lambda: simulate(m, init, t_end, np.random.default_rng(0), n_snapshots=2,
                                backend=backend)
    return f"ibm K={K} t={t_end:g}", run


def lv_case(t_end):
    m = GaussianExample(0.9, 0.5, 1.0).to_model()
    s = build_lv(m, [-1.0, -0.2, 0.6])

    def run(backend):
        return lambda: integrate(s, [0.3, 0.2, 0.4], t_end, backend=backend)
    return f"lv integrate d=3 t={t_end:g}", run


def limit_case(n):
    m = GaussianExample(0.9, 1.0, 1.0).to_model()
    rng = np.random.default_rng(0)
    cases = [(build_lv(m, sorted(rng.uniform(-0.5, 0.5, 3))), rng.uniform(0.1, 1.0, 3))
             for _ in range(n)]

    def run(backend):
        return lambda: [long_run_limit(s, n0, backend=backend) for s, n0 in cases]
    return f"lv long_run_limit x{n}", run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args(argv)
    try:
        _kernels.get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled extension not built; run pip install -e . first")
    scale = 0.2 if args.quick else 1.0
    cases = [ibm_case(200, 50 * scale), ibm_case(1000, 20 * scale), lv_case(1e3 * scale),
             limit_case(max(1, int(20 * scale)))]
    print(f"{'workload':<28}{'python s':>11}{'compiled s':>12}{'speedup':>10}")
    for name, run in cases:
        tp = best_time(run("python"), args.repeats)
        tc = best_time(run("compiled"), args.repeats)
        print(f"{name:<28}{tp:>11.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
