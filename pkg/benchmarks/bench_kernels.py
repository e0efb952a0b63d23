"""Compiled kernels versus the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times each kernel on both backends, checks their outputs agree, and times one
full synthetic scan pair per backend (each in a fresh interpreter, since the
backend is fixed at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from icpflow.kernels import available_backends
from icpflow.matching import histogram_shape

PAIR_SNIPPET = """
import time
from icpflow import BACKEND, SceneSpec, estimate_pair, generate
s = generate(SceneSpec(seed=0))
t = time.perf_counter()
estimate_pair(s.scans[0], s.scans[1], s.egos[0])
print(BACKEND, time.perf_counter() - t)
"""


def workloads(rng):
    from icpflow.synth import SceneSpec, generate

    scene = generate(SceneSpec(seed=0, n_frames=2))
    fused = np.vstack([s.points for s in scene.scans])
    objects = fused[fused[:, 2] > 0.3]  # the clustering input of one scan pair
    cloud = fused
    queries = fused[rng.choice(len(fused), 5000, replace=False)] + rng.normal(scale=0.05,
                                                                               size=(5000, 3))
    src = rng.uniform(-2, 2, size=(1000, 3))
    dst = src + [1.0, 0.5, 0.0]
    tau = np.array([3.33, 3.33, 0.1])
    shape = np.array(histogram_shape(tau, 0.1))
    return {
        f"kdtree build ({len(cloud) // 1000}k)": lambda k: k.KDTree(cloud),
        f"kdtree query (5k in {len(cloud) // 1000}k)":
            (lambda k, t={}: t.setdefault(k, k.KDTree(cloud)).query(queries)),
        "histogram votes (1k x 1k)": lambda k: k.histogram_votes(src, dst, tau, 0.1, shape),
        f"density components ({len(objects) // 1000}k)":
            lambda k: k.density_components(objects, 0.75, 5),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, fn in workloads(rng).items():
        times = {}
        for name, mod in backends.items():
            fn(mod)  # warm up
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:<28}" + "".join(f"{times[n] * 1e3:>12.2f}ms" for n in backends)
              + f"{speed:>9.1f}x")

    print("\nfull scan pair (default synthetic scene):")
    for pure in ("0", "1"):
        env = dict(os.environ, ICPFLOW_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", PAIR_SNIPPET], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"  {out[0]:<10}{float(out[1]):8.3f} s")


if __name__ == "__main__":
    main()
