"""Compare the compiled and pure-Python footprint kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each case runs on identical inputs for every importable backend and the
results are checked for equality before timings are reported.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from droneparking.grid import StageConfig
from droneparking.kernels import available_backends


def cases(cfg: StageConfig):
    rng = np.random.default_rng(0)
    geom = cfg.geom(0.3)
    lo = np.asarray(cfg.origin) + 1.0
    hi = np.asarray(cfg.upper) - 1.0
    pts = rng.uniform(lo, hi, (2000, 3))
    walk = np.cumsum(rng.normal(0, 0.4, (400, 3)), axis=0) + (lo + hi) / 2
    walk = np.clip(walk, lo, hi)
    rollouts = [np.clip(walk[:60] + rng.normal(0, 0.3, (60, 3)), lo, hi) for _ in range(50)]
    log_safe = {(i, j, k, t): -0.01 for i in range(8) for j in range(8) for k in range(6)
                for t in range(0, 40)}
    a = rng.uniform(lo, hi, (500, 3))
    segs = np.hstack([a, np.clip(a + rng.normal(0, 1.0, a.shape), lo, hi)])

    def ball(k):
        return [k.ball_cells(p[0], p[1], p[2], geom) for p in pts]

    def traj(k):
        return k.trajectory_tiles(walk, 0, geom)

    def counts(k):
        c: dict = {}
        for r in rollouts:
            k.accumulate_counts(c, r, 0, geom)
        return c

    def edges(k):
        return [k.edge_cost(s[0], s[1], s[2], s[3], s[4], s[5], 5, geom, log_safe, None)
                for s in segs]

    return {"ball_cells x2000": ball, "trajectory_tiles 400 poses": traj,
            "accumulate_counts 50x60": counts, "edge_cost x500": edges}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = available_backends()
    cfg = StageConfig()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':<30}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(cfg).items():
        outs = {b: fn(m) for b, m in backends.items()}
        ref = next(iter(outs.values()))
        assert all(o == ref for o in outs.values()), f"backends disagree on {name}"
        best = {b: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat))
                for b, m in backends.items()}
        row = f"{name:<30}" + "".join(f"{best[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in best:
            row += f"{best['python'] / best['cython']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
