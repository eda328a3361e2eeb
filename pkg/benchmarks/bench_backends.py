#!/usr/bin/env python3
"""Benchmark the compiled kernel against the pure-Python fallback.

Times the three kernel primitives and a small end-to-end bootstrap on
the bundled case-study data.  Run after an editable install:

    python benchmarks/bench_backends.py [--units 200] [--B 20] [--I 20]
"""

import argparse
import time
from pathlib import Path

import numpy as np

import rsboot as rb
from rsboot import _kernel, rng
from rsboot._kernel import get_backend
from rsboot.surfaces import ols_projector

DATA = Path(__file__).resolve().parent.parent / "tests" / "data" / "table1.csv"


def minimize_params():
    return (_kernel.GRID_POINTS, _kernel.N_STARTS, _kernel.MAX_ITER,
            _kernel.GRAD_TOL, _kernel.STEP_TOL, _kernel.ARMIJO_C,
            _kernel.BACKTRACK, _kernel.TIE_TOL, _kernel.VLOG_MAX)


def bench(label, fn, repeats):
    fn()  # warm-up (grid caches, JIT-less but import costs)
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    elapsed = (time.perf_counter() - start) / repeats
    print(f"  {label:<28s} {elapsed * 1e3:10.3f} ms")
    return elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--units", type=int, default=200,
                        help="kernel-unit repetitions (default 200)")
    parser.add_argument("--B", type=int, default=20,
                        help="outer replicates for the end-to-end run")
    parser.add_argument("--I", type=int, default=20,
                        help="inner replicates for the end-to-end run")
    args = parser.parse_args()

    table = rb.load_design_table(DATA, 50.0)
    box = rb.Box.unit(2)
    values, counts = table.padded_values()
    projector = ols_projector(table.points)
    cells = rb.summarize(table)
    mean_s, _ = rb.fit_ols(table.points, [c.mean for c in cells])
    logv_s, _ = rb.fit_ols(table.points, [c.log_variance for c in cells])
    mean_c = np.asarray(mean_s.coefficients)
    logvar_c = np.asarray(logv_s.coefficients)
    lower, upper = box.lower, box.upper
    key = rng.derive(rng.root_key(1), 1)

    results = {}
    for name in rb.available_backends():
        impl = get_backend(name)
        print(f"backend: {name}")
        times = {}
        times["resample"] = bench(
            "resample (9 cells x 10)",
            lambda: impl.resample(values, counts, key), args.units * 10)
        times["fit"] = bench(
            "fit_pair (2 surfaces)",
            lambda: impl.fit_pair(impl.resample(values, counts, key),
                                  counts, projector, 1e-8), args.units * 5)
        times["minimize"] = bench(
            "minimize (grid 101^2 + polish)",
            lambda: impl.minimize_sql(mean_c, logvar_c, 50.0, lower, upper,
                                      *minimize_params()),
            args.units)
        times["unit"] = bench(
            "replicate unit (fused)",
            lambda: impl.replicate_optimum(values, counts, projector, key,
                                           50.0, lower, upper, 1e-8,
                                           *minimize_params()),
            args.units)
        config = rb.BootstrapConfig(B=args.B, I=args.I, seed=9,
                                    alpha=0.10, run_inner=True)
        start = time.perf_counter()
        ensemble = rb.run_bootstrap(table, 50.0, box, config, backend=impl)
        times["bootstrap"] = time.perf_counter() - start
        n_units = args.B * (1 + args.I)
        print(f"  {'bootstrap B=%d I=%d' % (args.B, args.I):<28s} "
              f"{times['bootstrap']:10.3f} s "
              f"({times['bootstrap'] / n_units * 1e3:.2f} ms/unit)")
        results[name] = (times, ensemble)

    if len(results) == 2:
        compiled, python = results["compiled"][0], results["python"][0]
        print("speedup (python / compiled):")
        for stage in ("resample", "fit", "minimize", "unit", "bootstrap"):
            print(f"  {stage:<28s} {python[stage] / compiled[stage]:10.1f}x")
        ens_c, ens_p = results["compiled"][1], results["python"][1]
        gap = np.abs(ens_c.optima() - ens_p.optima()).max()
        print(f"max |optimum difference| between backends: {gap:.3g}")


if __name__ == "__main__":
    main()
