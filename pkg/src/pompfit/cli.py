"""Command-line entry point: ``pompfit {simulate,pfilter,mif2,profile}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 model error.

Random streams are keyed by job, never by worker, so every CSV output is a
function of the config and seed alone:

========  ==========================================
key       use
========  ==========================================
(0,)      simulation
(1, r)    pfilter replicate r
(2, i)    mif2 start i: start draw and IF2 run
(3, i)    replicated evaluation of candidate i
(4, p, k) profile of the p-th target, grid point k
========  ==========================================
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, profile_grid
from .core import ConfigError, DataError, ModelError, ParamVector, TimeSeries
from .io import LedgerRecord, ledger_append, read_data, write_csv, write_data
from .mif2 import Candidate, hypercube_starts, mean_se, mif2, rank_candidates, replicate_loglik
from .parallel import job_rng, run_jobs
from .pfilter import particle_filter
from .profile import mcap, profile_likelihood, refine_grid
from .simulators import simulate_path

logger = logging.getLogger("pompfit")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4


def _ledger(cfg: RunConfig, params: ParamVector, loglik, se, J, reps, workflow):
    rec = LedgerRecord.now(model=cfg.model, params=params.as_dict(), loglik=float(loglik), se=float(se),
                           particles=int(J), replicates=int(reps), seed=cfg.seed, workflow=workflow)
    ledger_append(rec, cfg.out / "ledger.csv")


def _load_data(cfg: RunConfig) -> TimeSeries:
    return read_data(cfg.data_path)


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> None:
    """Write ``data.csv`` and ``states.csv`` for one simulated realization.

    With ``simulate.min_final_size`` set, realizations are drawn from the same
    stream until the total incidence reaches that size.
    """
    model = cfg.build_model()
    rng = job_rng(cfg.seed, 0)
    times = np.arange(1, cfg.simulate.weeks + 1, dtype=float)
    for _ in range(cfg.simulate.max_tries):
        states, obs = simulate_path(model, cfg.params, times, cfg.simulate.method, rng)
        if states[:, -1].sum() >= cfg.simulate.min_final_size:
            break
    else:
        raise ModelError(f"no realization reached final size {cfg.simulate.min_final_size} "
                         f"in {cfg.simulate.max_tries} tries")
    write_data(cfg.out / "data.csv", TimeSeries(times, obs))
    write_csv(cfg.out / "states.csv", ["time", *model.statenames],
              [(t, *map(int, s)) for t, s in zip(times, states)])
    logger.info("simulated %d observations into %s", len(times), cfg.out)


# --------------------------------------------------------------------------
# pfilter
# --------------------------------------------------------------------------


def _pfilter_job(cfg: RunConfig, data: TimeSeries, r: int):
    res = particle_filter(cfg.build_model(), data, cfg.params, cfg.pfilter.particles, cfg.pfilter.tol,
                          job_rng(cfg.seed, 1, r), cfg.pfilter.resampling)
    return res.loglik, res.nfail


def cmd_pfilter(cfg: RunConfig) -> None:
    """Replicated particle filters at the configured parameters."""
    data = _load_data(cfg)
    out = run_jobs(_pfilter_job, [(cfg, data, r) for r in range(cfg.pfilter.replicates)], cfg.workers)
    ll = np.array([o[0] for o in out])
    mean, se = mean_se(ll)
    rows = [("replicate", r + 1, l, None, n) for r, (l, n) in enumerate(out)]
    rows.append(("summary", None, mean, se, sum(n for _, n in out)))
    write_csv(cfg.out / "pfilter_result.csv", ["kind", "replicate", "loglik", "se", "nfail"], rows)
    _ledger(cfg, cfg.params, mean, se, cfg.pfilter.particles, cfg.pfilter.replicates, "pfilter")
    logger.info("pfilter loglik %.3f (se %.3f)", mean, se)


# --------------------------------------------------------------------------
# mif2
# --------------------------------------------------------------------------


def _mif2_job(cfg: RunConfig, data: TimeSeries, i: int):
    model = cfg.build_model()
    rng = job_rng(cfg.seed, 2, i)
    start = hypercube_starts(cfg.params, cfg.box, 1, rng)[0]
    res = mif2(model, data, start, cfg.mif2, rng)
    ll = replicate_loglik(model, data, res.estimate, cfg.eval_replicates, cfg.eval_particles,
                          cfg.mif2.tol, job_rng(cfg.seed, 3, i))
    return res.loglik, res.nfail, res.traces, res.estimate, ll


def cmd_mif2(cfg: RunConfig) -> list:
    """Independent IF2 searches from hypercube starts, ranked by replicated filtering."""
    data = _load_data(cfg)
    out = run_jobs(_mif2_job, [(cfg, data, i) for i in range(cfg.mif2_starts)], cfg.workers)
    names = cfg.params.names
    est_idx = [names.index(k) for k in cfg.params.estimated_names]
    rows = []
    for i, (ll, nf, tr, _, _) in enumerate(out):
        for m in range(len(ll)):
            rows.append((i + 1, m + 1, ll[m], int(nf[m]), *tr[m, est_idx]))
    write_csv(cfg.out / "traces.csv", ["start", "iteration", "loglik", "nfail", *cfg.params.estimated_names], rows)

    cands = rank_candidates([Candidate(est, *mean_se(ll), ll, i) for i, (_, _, _, est, ll) in enumerate(out)])
    write_csv(cfg.out / "candidates.csv", ["rank", "start", "loglik", "se", *names],
              [(r + 1, c.index + 1, c.loglik, c.se, *c.params.values) for r, c in enumerate(cands)])
    for c in cands:
        _ledger(cfg, c.params, c.loglik, c.se, cfg.eval_particles, cfg.eval_replicates, "mif2")
    logger.info("best candidate loglik %.3f", cands[0].loglik)
    return cands


# --------------------------------------------------------------------------
# profile
# --------------------------------------------------------------------------


def _best_params(cfg: RunConfig) -> ParamVector:
    """Estimate from ``candidates.csv`` in the output directory, else the config values."""
    path = cfg.out / "candidates.csv"
    if not path.exists():
        return cfg.params
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return cfg.params
    try:
        vals = {k: float(rows[0][k]) for k in cfg.params.names}
    except (KeyError, ValueError):
        raise DataError(f"{path}: line 2: candidate row does not match the model parameters") from None
    logger.info("profiling around the best candidate in %s", path)
    return cfg.params.replace(**vals)


def cmd_profile(cfg: RunConfig) -> dict:
    """Profile each target and write ``profile_<p>.csv`` and ``mcap_<p>.csv``."""
    ps = cfg.profile
    if not ps.targets:
        raise ConfigError("profile.target: required")
    data = _load_data(cfg)
    model = cfg.build_model()
    center = _best_params(cfg)
    settings = replace(cfg.mif2, iterations=ps.iterations or cfg.mif2.iterations,
                       particles=ps.particles or cfg.mif2.particles)
    box = {**cfg.box, **(ps.box or {})}
    results = {}
    for p, target in enumerate(ps.targets):
        scale = center.scales[center.index(target)]
        grid = profile_grid(ps.grid if not isinstance(ps.grid, dict) or target not in ps.grid
                            else ps.grid[target], center[target], scale)

        def run(values, start_index):
            return profile_likelihood(model, data, center, target, values, settings, ps.starts, box,
                                      ps.eval_replicates, ps.eval_particles, cfg.seed, cfg.workers,
                                      stream=(4, p), start_index=start_index)

        points = run(grid, 0)
        result = _mcap_or_none(points, ps)
        if ps.refine and result is not None:
            extra = refine_grid(grid, result)
            if len(extra):
                points = sorted(points + run(extra, len(grid)), key=lambda q: q.value)
                result = _mcap_or_none(points, ps)
        nuis = center.names
        write_csv(cfg.out / f"profile_{target}.csv", ["value", "loglik", "se", *nuis],
                  [(q.value, q.loglik, q.se, *q.params.values) for q in points])
        _write_mcap(cfg.out / f"mcap_{target}.csv", points, result)
        for q in points:
            _ledger(cfg, q.params, q.loglik, q.se, ps.eval_particles, ps.eval_replicates, f"profile:{target}")
        results[target] = (points, result)
    return results


def _mcap_or_none(points, ps):
    finite = [q for q in points if math.isfinite(q.loglik)]
    if len(finite) < 5:
        warnings.warn(f"profile has {len(finite)} usable points; at least 5 are needed for an "
                      "MCAP interval, CI columns left empty", RuntimeWarning, stacklevel=2)
        return None
    return mcap(points, ps.level, ps.span)


def _write_mcap(path: Path, points, result):
    header = ["parameter", "smoothed", "quadratic", "mle", "cutoff", "lower", "upper", "level"]
    if result is None:
        rows = [(q.value, None, None, None, None, None, None, None) for q in points]
    else:
        lo, hi = result.ci
        rows = [(x, s, qd, result.mle, result.cutoff, lo, hi, result.level)
                for x, s, qd in zip(result.parameter, result.smoothed, result.quadratic)]
    write_csv(path, header, rows)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

COMMANDS = {"simulate": cmd_simulate, "pfilter": cmd_pfilter, "mif2": cmd_mif2, "profile": cmd_profile}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pompfit", description="Likelihood inference for POMP epidemic models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--seed", type=int, help="master seed; overrides the config")
        sp.add_argument("--workers", type=int, help="worker processes for independent jobs")
        sp.add_argument("--out", help="output directory; overrides the config")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.workers, args.out)
        cfg.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as e:
        print(f"model error: {e}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
