"""Wall time of one process step for the numba kernels and the numpy engine.

Run with ``python benchmarks/bench_kernels.py``. The numpy rows use the
generic reaction engine, which is what ``POMPFIT_DISABLE_NUMBA=1`` selects.
"""

import argparse
import time

import numpy as np

from pompfit.models import SIRModel, SIRSModel


def advance_seconds(model, J, weeks, repeats):
    pv = model.default_params()
    theta = model.theta_matrix(pv, J)
    x0 = model.rinit(theta, np.random.default_rng(0))
    model.rprocess(x0.copy(), theta, 0.0, 1.0, np.random.default_rng(0))  # compile outside the timing
    best = np.inf
    for r in range(repeats):
        x = x0.copy()
        rng = np.random.default_rng(r)
        t0 = time.perf_counter()
        for w in range(weeks):
            x = model.rprocess(x, theta, float(w), w + 1.0, rng)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--particles", type=int, default=1000)
    ap.add_argument("--weeks", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    cases = [("sir", SIRModel, 0.01), ("sirs", SIRSModel, 0.05)]
    print(f"{'model':6s} {'backend':8s} {'seconds':>9s} {'ns/particle-step':>17s}")
    for name, cls, dt in cases:
        steps = args.weeks * round(1 / dt) * args.particles
        base = None
        for backend in ("numba", "numpy"):
            sec = advance_seconds(cls(dt=dt, backend=backend), args.particles, args.weeks, args.repeats)
            base = base or sec
            print(f"{name:6s} {backend:8s} {sec:9.3f} {1e9 * sec / steps:17.1f}  (x{sec / base:.1f})")


if __name__ == "__main__":
    main()
