"""Bootstrap particle filter and the naive Monte Carlo likelihood estimator."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import ModelError, ParamVector, PompModel, TimeSeries

DEFAULT_TOL = 1e-17


@dataclass
class FilterResult:
    """Output of :func:`particle_filter`.

    ``loglik`` is the sum of ``cond_loglik``; failed observations contribute
    ``log(tol)``.
    """

    loglik: float
    cond_loglik: np.ndarray
    ess: np.ndarray
    fail_indices: np.ndarray
    filter_mean: np.ndarray | None = None

    @property
    def nfail(self) -> int:
        return len(self.fail_indices)


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def effective_sample_size(weights) -> float:
    """(sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if not s > 0:
        raise ValueError("effective sample size needs a positive weight sum")
    w = w / w.max()
    return float(w.sum() ** 2 / np.dot(w, w))


def resample(weights, J: int, scheme: str = "multinomial", rng=None) -> np.ndarray:
    """Ancestor indices drawn with probability proportional to ``weights``.

    ``multinomial`` draws J independent indices; ``systematic`` uses one
    uniform offset and J evenly spaced positions.
    """
    rng = as_rng(rng)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not (total > 0 and np.isfinite(total)) or np.any(w < 0):
        raise ValueError("resampling needs non-negative weights with a positive finite sum")
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    if scheme == "multinomial":
        u = rng.random(J)
    elif scheme == "systematic":
        u = (rng.random() + np.arange(J)) / J
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(w) - 1)


def weigh(logw, tol: float, n: int):
    """Conditional log-likelihood and normalised weights for one observation.

    Returns ``(cond_loglik, w)`` where ``w`` is ``None`` for a filtering
    failure (every particle likelihood below ``tol``). Weights are scaled by
    the largest one to avoid underflow.
    """
    logw = np.asarray(logw, dtype=float)
    if np.any(np.isnan(logw)) or np.any(logw == np.inf):
        raise ModelError(f"non-finite observation density at observation {n}")
    top = logw.max()
    if top < math.log(tol):
        return math.log(tol), None
    w = np.exp(logw - top)
    return math.log(w.mean()) + top, w


def particle_filter(
    model: PompModel,
    data: TimeSeries,
    params: ParamVector,
    J: int,
    tol: float = DEFAULT_TOL,
    rng=None,
    resampling: str = "multinomial",
    filter_mean: bool = False,
) -> FilterResult:
    """Sequential importance resampling estimate of the log-likelihood.

    Observation indices in the result (``fail_indices``) are 1-based, matching
    y_1..y_N.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = as_rng(rng)
    N = len(data)
    theta = model.theta_matrix(params, J)
    x = model.rinit(theta, rng)
    cond = np.empty(N)
    ess = np.empty(N)
    fails = []
    means = np.empty((N, x.shape[1])) if filter_mean else None
    t = data.t0
    for n in range(N):
        tn = data.times[n]
        x = model.rprocess(x, theta, t, tn, rng)
        t = tn
        cond[n], w = weigh(model.dmeasure(data.values[n], x, theta), tol, n + 1)
        if w is None:
            fails.append(n + 1)
            ess[n] = 0.0
            if filter_mean:
                means[n] = x.mean(axis=0)
            continue
        ess[n] = effective_sample_size(w)
        if filter_mean:
            means[n] = w @ x / w.sum()
        x = x[resample(w, J, resampling, rng)]
    return FilterResult(float(cond.sum()), cond, ess, np.array(fails, dtype=int), means)


def naive_mc_loglik(model: PompModel, data: TimeSeries, params: ParamVector, J: int, rng=None):
    """Log of the average likelihood over J unconditional trajectories, with its SE.

    The standard error is the delta-method SE of the log of the mean.
    """
    if J < 2:
        raise ValueError("J must be at least 2")
    rng = as_rng(rng)
    theta = model.theta_matrix(params, J)
    x = model.rinit(theta, rng)
    logl = np.zeros(J)
    t = data.t0
    for n in range(len(data)):
        x = model.rprocess(x, theta, t, data.times[n], rng)
        t = data.times[n]
        logl += model.dmeasure(data.values[n], x, theta)
    if np.all(np.isneginf(logl)):
        warnings.warn("every trajectory has zero likelihood", RuntimeWarning, stacklevel=2)
        return -math.inf, math.nan
    est = float(logsumexp(logl) - math.log(J))
    lik = np.exp(logl - logl.max())
    se = float(lik.std(ddof=1) / (math.sqrt(J) * lik.mean()))
    return est, se
