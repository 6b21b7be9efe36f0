"""Benchmark the compiled kernel extension against the pure-numpy fallback.

Runs each hot kernel on identical inputs, checks that the two backends
agree to float rounding, and reports per-call timings plus an end-to-end
synthesis comparison (run in subprocesses so each backend is selected at
import time, exactly as a user would get it).

Usage: python3 scripts/bench_backends.py [--n 1024] [--k 50] [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _knn(points, k):
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1)[:, :k].astype(np.int64)


def make_inputs(n, k, bins, m, mode, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.random((n, 2))
    g_pts = rng.normal(size=(n, m))
    g_pts /= np.linalg.norm(g_pts, axis=1, keepdims=True)
    g_jac = rng.normal(scale=0.3, size=(n, m, 2))
    knn = _knn(points, k)
    queries = points.copy()
    d_q = np.full(n, 0.05)
    g_q = g_pts.copy()
    r_hi = 2.0 * np.sqrt(1.0 / (2.0 * np.sqrt(3.0) * n))
    radii = np.linspace(0.1 * r_hi, 2.0 * r_hi, bins)
    sigma_r = 0.25 * (radii[1] - radii[0])
    coeff = rng.normal(size=(n, bins))
    res = 64
    g_cells = rng.normal(size=(res * res, m))
    g_cells /= np.linalg.norm(g_cells, axis=1, keepdims=True)
    return dict(points=points, g_pts=g_pts, g_jac=g_jac, knn=knn,
                queries=queries, d_q=d_q, g_q=g_q, radii=radii,
                sigma_r=float(sigma_r), bandwidth=1.0, mode=mode,
                coeff=coeff, res=res, g_cells=g_cells)


def bench_kernels(args):
    from stipplemap import _kernels as ck
    from stipplemap import _kernels_np as nk

    print(f"kernel benchmark: n={args.n} k={args.k} bins=20 m=3 "
          f"repeats={args.repeats}")
    header = f"{'kernel':<14}{'mode':<6}{'c [ms]':>10}{'numpy [ms]':>12}" \
             f"{'speedup':>9}{'max |diff|':>12}"
    print(header)
    print("-" * len(header))
    for mode in (0, 1):
        inp = make_inputs(args.n, args.k, 20, 3, mode)
        cases = {
            "norm_table": lambda k=None: (inp["res"], inp["g_cells"],
                                          inp["queries"][:64], inp["d_q"][:64],
                                          inp["g_q"][:64], inp["radii"],
                                          inp["sigma_r"], inp["bandwidth"], mode),
            "pcf_sums": lambda k=None: (inp["points"], inp["g_pts"], inp["knn"],
                                        inp["queries"], inp["d_q"], inp["g_q"],
                                        inp["radii"], inp["sigma_r"],
                                        inp["bandwidth"], mode),
            "pcf_gradient": lambda k=None: (inp["points"], inp["g_pts"],
                                            inp["g_jac"], inp["knn"],
                                            inp["queries"], inp["d_q"],
                                            inp["g_q"], inp["coeff"],
                                            inp["radii"], inp["sigma_r"],
                                            inp["bandwidth"], mode),
        }
        for name, get_args in cases.items():
            call = get_args()
            c_fn = getattr(ck, name)
            n_fn = getattr(nk, name)
            ref = np.asarray(c_fn(*call))
            alt = np.asarray(n_fn(*call))
            diff = float(np.max(np.abs(ref - alt)))
            scale = max(float(np.max(np.abs(ref))), 1.0)
            assert diff <= 1e-9 * scale, f"{name} mode {mode}: backends disagree ({diff})"
            tc = _best_of(lambda: c_fn(*call), args.repeats)
            tn = _best_of(lambda: n_fn(*call), args.repeats)
            print(f"{name:<14}{mode:<6}{tc * 1e3:>10.2f}{tn * 1e3:>12.2f}"
                  f"{tn / tc:>9.1f}{diff:>12.2e}")


_E2E_SNIPPET = """
import json, time
import numpy as np
import stipplemap
from stipplemap.synthesis import match_pcf, SynthesisConfig

target = np.ones(20)
t0 = time.perf_counter()
pts, info = match_pcf(target, {n}, learning_rate=1e-3,
                      iterations={iters}, seed=7)
dt = time.perf_counter() - t0
print(json.dumps({{"backend": stipplemap.BACKEND, "seconds": dt,
                   "objective": info["final_objective"]}}))
"""


def bench_end_to_end(args):
    print(f"\nend-to-end synthesis: match_pcf n={args.n} iterations={args.e2e_iters}")
    results = {}
    for backend in ("c", "numpy"):
        env = dict(os.environ, STIPPLEMAP_BACKEND=backend)
        code = _E2E_SNIPPET.format(n=args.n, iters=args.e2e_iters)
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        results[backend] = json.loads(out.stdout.strip().splitlines()[-1])
        r = results[backend]
        print(f"  {backend:<6} {r['seconds']:8.2f} s   objective {r['objective']:.6g}")
    obj_c = results["c"]["objective"]
    obj_n = results["numpy"]["objective"]
    rel = abs(obj_c - obj_n) / max(abs(obj_c), 1e-12)
    print(f"  objective agreement: rel diff {rel:.2e}")
    print(f"  speedup: {results['numpy']['seconds'] / results['c']['seconds']:.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--k", type=int, default=50)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--e2e-iters", type=int, default=200)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args()
    bench_kernels(args)
    if not args.skip_e2e:
        bench_end_to_end(args)


if __name__ == "__main__":
    main()
