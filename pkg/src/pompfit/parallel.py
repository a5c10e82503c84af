"""Independent jobs with reproducible random streams.

Each job's generator is derived from ``(master seed, job key)`` only, so the
results do not depend on the number of workers or their scheduling.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np


def job_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _call(args):
    fn, a = args
    return fn(*a)


def run_jobs(fn, arglist, workers: int = 1) -> list:
    """``[fn(*args) for args in arglist]``, optionally across processes; order is kept."""
    arglist = list(arglist)
    if workers <= 1 or len(arglist) <= 1:
        return [fn(*a) for a in arglist]
    with ProcessPoolExecutor(max_workers=min(workers, len(arglist))) as pool:
        return list(pool.map(_call, [(fn, a) for a in arglist]))
