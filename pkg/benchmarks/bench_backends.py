"""Compares the compiled kernel extension against the NumPy fallback.

Two views: microbenchmarks of the fused per-sample update at codebook
shapes that occur in practice, and an end-to-end training run executed in
subprocesses so each backend is selected the same way users get it
(ODA_DISABLE_EXT=1 forces the fallback).

Run: python benchmarks/bench_backends.py
"""

import os
import subprocess
import sys
import time

import numpy as np

END_TO_END = r"""
import time
import numpy as np
from oda import AnnealParams, run_oda, gen_gaussians, stream
from oda._backend import BACKEND

ds = gen_gaussians(11, 750, [[-3.0, 0.0], [3.0, 0.0]], 1.0)
start = time.perf_counter()
state = run_oda(stream(ds, seed=11), AnnealParams(seed=11))
elapsed = time.perf_counter() - start
samples = sum(r.samples_observed for r in state.history)
print(f"{BACKEND}: {elapsed:.3f}s for {samples} updates "
      f"({elapsed / samples * 1e6:.1f} us/update), final K={state.k}")
"""


def micro():
    from oda import _kernels_py

    try:
        from oda import _kernels
    except ImportError:
        print("compiled extension not built; microbenchmark needs both backends")
        return
    rng = np.random.default_rng(0)
    print(f"{'K':>5} {'d':>5} {'cython us':>10} {'numpy us':>10} {'speedup':>8}")
    for k, d in [(4, 2), (16, 16), (32, 49), (64, 196), (256, 784)]:
        mu = rng.standard_normal((k, d))
        rho = np.full(k, 1.0 / k)
        sigma = np.ascontiguousarray(mu * rho[:, None])
        x = rng.standard_normal(d)
        smask = (rng.random(k) < 0.5).astype(np.float64)
        work = np.empty(k)
        times = []
        for mod in (_kernels, _kernels_py):
            m2, r2, s2 = mu.copy(), rho.copy(), sigma.copy()
            reps = max(2000, min(20000, 2_000_000 // (k * d)))
            start = time.perf_counter()
            for _ in range(reps):
                mod.sa_update(0, 1e-12, x, m2, r2, s2, smask, 5.0, 0.01, work)
            times.append((time.perf_counter() - start) / reps * 1e6)
        print(f"{k:>5} {d:>5} {times[0]:>10.2f} {times[1]:>10.2f} "
              f"{times[1] / times[0]:>7.1f}x")


def end_to_end():
    for label, env in (("compiled", {}), ("fallback", {"ODA_DISABLE_EXT": "1"})):
        merged = dict(os.environ, **env)
        result = subprocess.run([sys.executable, "-c", END_TO_END],
                                capture_output=True, text=True, env=merged)
        out = result.stdout.strip() or result.stderr.strip()
        print(f"  {label:9s} {out}")


if __name__ == "__main__":
    print("fused per-sample update, squared Euclidean:")
    micro()
    print("\nend-to-end training on 2-class Gaussian blobs:")
    end_to_end()
