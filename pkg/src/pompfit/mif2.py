"""Iterated filtering (IF2) with geometric cooling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, ParamSpace, ParamVector, PompModel, TimeSeries
from .pfilter import DEFAULT_TOL, as_rng, particle_filter, resample, weigh


@dataclass(frozen=True)
class Mif2Settings:
    """Algorithmic settings.

    ``rw_sd`` maps estimated parameter names to random-walk standard
    deviations on the estimation scale; parameters absent from it are not
    perturbed.
    """

    iterations: int = 100
    particles: int = 500
    rw_sd: dict = field(default_factory=dict)
    cooling_fraction: float = 0.05
    cooling_horizon: float = 50.0
    tol: float = DEFAULT_TOL
    resampling: str = "multinomial"

    def __post_init__(self):
        if self.iterations < 1 or self.particles < 1:
            raise ConfigError("iterations and particles must be at least 1")
        if not 0 < self.cooling_fraction < 1:
            raise ConfigError("cooling_fraction must lie in (0, 1)")
        if self.cooling_horizon <= 0:
            raise ConfigError("cooling_horizon must be positive")
        if any(v < 0 for v in self.rw_sd.values()):
            raise ConfigError("random-walk sd must be non-negative")

    def sd_vector(self, params: ParamVector) -> np.ndarray:
        unknown = set(self.rw_sd) - set(params.names)
        if unknown:
            raise ConfigError(f"rw_sd names unknown parameters: {sorted(unknown)}")
        sd = np.array([float(self.rw_sd.get(k, 0.0)) for k in params.names])
        sd[~params.estimated_mask] = 0.0
        return sd


@dataclass
class Mif2Result:
    """Final swarm (estimation scale) with per-iteration diagnostics.

    ``loglik`` is the log-likelihood of the perturbed filter, a diagnostic
    only; ``traces`` holds the natural-scale swarm mean of every parameter
    after each iteration.
    """

    swarm: np.ndarray
    estimate: ParamVector
    loglik: np.ndarray
    nfail: np.ndarray
    traces: np.ndarray
    names: tuple


def cooling_intensity(m, fraction: float = 0.05, horizon: float = 50.0):
    """Relative perturbation intensity on iteration ``m``: fraction**(m / horizon)."""
    return fraction ** (np.asarray(m, dtype=float) / horizon)


def perturb(theta, sd, rng) -> np.ndarray:
    """Add independent normal noise to coordinates with positive sd.

    No random numbers are drawn when every sd is zero.
    """
    theta = np.array(theta, dtype=float)
    sd = np.asarray(sd, dtype=float)
    cols = np.flatnonzero(sd > 0)
    if len(cols) == 0:
        return theta
    if theta.ndim == 1:
        theta[cols] += sd[cols] * rng.standard_normal(len(cols))
    else:
        theta[:, cols] += sd[cols] * rng.standard_normal((theta.shape[0], len(cols)))
    return theta


def mif2(
    model: PompModel,
    data: TimeSeries,
    start,
    settings: Mif2Settings,
    rng=None,
) -> Mif2Result:
    """Run IF2 from ``start``.

    ``start`` is either a ParamVector, replicated to J particles, or a pair
    ``(ParamVector, swarm)`` where ``swarm`` is a ``(J, P)`` natural-scale
    array in the vector's name order. The point estimate is the natural-scale
    mean of the final swarm.
    """
    rng = as_rng(rng)
    if isinstance(start, tuple):
        template, swarm_nat = start
        swarm_nat = np.asarray(swarm_nat, dtype=float)
    else:
        template, swarm_nat = start, None
    J = settings.particles
    space = ParamSpace(template)
    sd0 = settings.sd_vector(template)
    if swarm_nat is None:
        swarm_nat = model.theta_matrix(template, J)
    elif swarm_nat.shape != (J, len(template)):
        raise ConfigError(f"initial swarm must have shape {(J, len(template))}")
    swarm = space.to_est(swarm_nat)

    M = settings.iterations
    loglik = np.empty(M)
    nfail = np.zeros(M, dtype=int)
    traces = np.empty((M, len(template)))
    for m in range(1, M + 1):
        sd = sd0 * cooling_intensity(m, settings.cooling_fraction, settings.cooling_horizon)
        theta = perturb(swarm, sd, rng)
        nat = space.to_natural(theta)
        x = model.rinit(nat, rng)
        total = 0.0
        t = data.t0
        for n in range(len(data)):
            theta = perturb(theta, sd, rng)
            nat = space.to_natural(theta)
            x = model.rprocess(x, nat, t, data.times[n], rng)
            t = data.times[n]
            cond, w = weigh(model.dmeasure(data.values[n], x, nat), settings.tol, n + 1)
            total += cond
            if w is None:
                nfail[m - 1] += 1
                continue
            k = resample(w, J, settings.resampling, rng)
            x = x[k]
            theta = theta[k]
        swarm = theta
        loglik[m - 1] = total
        traces[m - 1] = _swarm_mean(space, swarm)
    estimate = template.with_values(_swarm_mean(space, swarm))
    return Mif2Result(swarm, estimate, loglik, nfail, traces, template.names)


def _swarm_mean(space, swarm):
    # fixed columns are copied, not averaged, so they stay bit-identical
    return np.where(space.mask, space.to_natural(swarm).mean(axis=0), space.params.values)


@dataclass
class Candidate:
    params: ParamVector
    loglik: float
    se: float
    logliks: np.ndarray
    index: int


def replicate_loglik(model, data, params, replicates: int, J: int, tol=DEFAULT_TOL, rng=None):
    """Replicated particle-filter log-likelihoods at fixed parameters."""
    rng = as_rng(rng)
    return np.array([particle_filter(model, data, params, J, tol, rng).loglik for _ in range(replicates)])


def evaluate_candidates(candidates, model, data, replicates: int, J: int, rng=None, tol=DEFAULT_TOL):
    """Rank parameter vectors by mean replicated log-likelihood.

    Ties are broken by smaller standard error, then by input order.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    rng = as_rng(rng)
    out = []
    for i, p in enumerate(candidates):
        ll = replicate_loglik(model, data, p, replicates, J, tol, rng)
        out.append(Candidate(p, *mean_se(ll), ll, i))
    return rank_candidates(out)


def mean_se(ll):
    ll = np.asarray(ll, dtype=float)
    if not np.all(np.isfinite(ll)):
        return float(np.mean(ll)), math.nan
    return float(ll.mean()), float(ll.std(ddof=1) / math.sqrt(len(ll)))


def rank_candidates(cands):
    def key(c):
        se = c.se if np.isfinite(c.se) else math.inf
        ll = c.loglik if not math.isnan(c.loglik) else -math.inf
        return (-ll, se, c.index)

    return sorted(cands, key=key)


def hypercube_starts(params: ParamVector, box: dict, n: int, rng) -> list:
    """``n`` starting vectors with estimated parameters uniform in ``box`` (natural scale)."""
    rng = as_rng(rng)
    missing = [k for k in params.estimated_names if k not in box]
    if missing:
        raise ConfigError(f"no hypercube bounds for estimated parameters {missing}")
    starts = []
    for _ in range(n):
        draws = {k: rng.uniform(*box[k]) for k in params.estimated_names}
        starts.append(params.replace(**draws))
    return starts
