"""Compare the compiled and numpy round kernels on identical inputs.

Run ``python benchmarks/bench_kernels.py [rounds]``. Both backends consume the
same pre-drawn uniforms, so their tallies must agree exactly.
"""

import sys
import time

import numpy as np

from mdiqn import kernels
from mdiqn.model import LinkModel, default_protocol, TAGS, BASIS_OF


def _inputs(n, seed=1):
    rng = np.random.default_rng(seed)
    p = default_protocol()
    probs = np.array([p.p(t) for t in TAGS])
    return dict(
        cls_l=rng.choice(4, size=n, p=probs / probs.sum()).astype(np.int8),
        cls_r=rng.choice(4, size=n, p=probs / probs.sum()).astype(np.int8),
        bit_l=rng.integers(0, 2, n, dtype=np.int8),
        bit_r=rng.integers(0, 2, n, dtype=np.int8),
        phase=rng.random(n) * 2 * np.pi,
        u=rng.random((n, 4)),
        mu=np.array([p.mu(t) for t in TAGS]),
        is_x=np.array([BASIS_OF[t] == "X" for t in TAGS], dtype=np.int8),
    )


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(n=2_000_000):
    link = LinkModel.symmetric(20.0, mode_overlap=0.966)
    args = _inputs(n)
    extra = (link.transmittance_left, link.transmittance_right, link.kappa, link.dark_prob)
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    results = {}
    for name in backends:
        dt, out = _time(lambda: kernels.tally_rounds(*args.values(), *extra, backend=name))
        results[name] = out
        print(f"tally_rounds  {name:>6}: {dt * 1e3:9.1f} ms  ({n / dt / 1e6:7.1f} M rounds/s)")
    s1 = np.random.default_rng(2).random(n) < 0.01
    s2 = np.random.default_rng(3).random(n) < 0.01
    for name in backends:
        dt, _ = _time(lambda: kernels.count_joint(s1, s2, backend=name))
        print(f"count_joint   {name:>6}: {dt * 1e3:9.1f} ms")
    if len(results) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(results["python"], results["cython"]))
        print("backends agree:", same)
    else:
        print("compiled kernels not built; only the numpy backend was timed")


if __name__ == "__main__":
    main(int(float(sys.argv[1])) if len(sys.argv) > 1 else 2_000_000)
