"""Time the compiled loop kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 7] [--pipeline]

Without numba the "loops" column is plain interpreted Python, which is only
useful as a sanity check.  ``--pipeline`` also times a small end-to-end run
with and without ``HYBRIDKP_DISABLE_NUMBA`` in fresh interpreters.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hybridkp import kernels
from hybridkp._accel import backend
from hybridkp.codec import encode_maps


def cases(rng):
    rows = rng.integers(0, 64, 12)
    cols = rng.integers(0, 64, 12)
    star = encode_maps([(c, r, np.zeros(3), 0.0) for r, c in zip(rows, cols)], 64, 64).star
    star = np.clip(star + rng.normal(scale=0.02, size=star.shape), 0, 1)
    big_rows = rng.integers(0, 256, 12)
    big_cols = rng.integers(0, 256, 12)
    mats = [np.ascontiguousarray(rng.normal(size=(3, 3))) for _ in range(200)]
    ra = np.linalg.qr(rng.normal(size=(5000, 3, 3)))[0]
    rb = np.linalg.qr(rng.normal(size=(5000, 3, 3)))[0]
    return {
        "render_star 64x64, 12 peaks": (
            lambda: kernels.render_star_loops(rows, cols, 64, 64, 1.0),
            lambda: kernels.render_star_numpy(rows, cols, 64, 64, 1.0),
        ),
        "render_star 256x256, 12 peaks": (
            lambda: kernels.render_star_loops(big_rows, big_cols, 256, 256, 1.0),
            lambda: kernels.render_star_numpy(big_rows, big_cols, 256, 256, 1.0),
        ),
        "local_maxima 64x64": (
            lambda: kernels.local_maxima_loops(star, 0.05),
            lambda: kernels.local_maxima_numpy(star, 0.05),
        ),
        "svd3 x200": (
            lambda: [kernels.svd3_loops(m) for m in mats],
            lambda: [kernels.svd3_numpy(m) for m in mats],
        ),
        "geodesic 5000 pairs": (
            lambda: kernels.geodesic_angles_loops(ra, rb),
            lambda: kernels.geodesic_angles_numpy(ra, rb),
        ),
    }


def best_of(fn, repeat):
    fn()  # warm up / compile
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


PIPELINE = (
    "import time; from hybridkp.harness import ExperimentConfig, run_experiment\n"
    "cfg = ExperimentConfig(instances_per_category=20, canview_noise=0.1, star_noise=0.005)\n"
    "run_experiment(cfg.replace(instances_per_category=1))\n"
    "t = time.perf_counter(); run_experiment(cfg); print(time.perf_counter() - t)\n"
)


def pipeline_seconds(disable):
    env = dict(os.environ, HYBRIDKP_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", PIPELINE], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--pipeline", action="store_true")
    args = ap.parse_args(argv)

    loops_label = "numba" if backend() == "numba" else "python"
    print(f"{'kernel':<32s}{loops_label + ' [ms]':>14s}{'numpy [ms]':>14s}{'ratio':>9s}")
    for name, (loops, vec) in cases(np.random.default_rng(0)).items():
        a = best_of(loops, args.repeat) * 1e3
        b = best_of(vec, args.repeat) * 1e3
        print(f"{name:<32s}{a:>14.4f}{b:>14.4f}{b / a:>9.2f}")
    if args.pipeline:
        fast = pipeline_seconds(disable=False)
        slow = pipeline_seconds(disable=True)
        print(f"\npipeline, 240 instances: default {fast:.2f} s, HYBRIDKP_DISABLE_NUMBA=1 {slow:.2f} s")


if __name__ == "__main__":
    main()
