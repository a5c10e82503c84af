"""Profile likelihood and Monte Carlo adjusted profile (MCAP) intervals.

The MCAP variant implemented here:

1. smooth the profile points with a local-quadratic smoother (tricube
   weights, span ``span``);
2. fit a weighted quadratic ``c + b x - a x^2`` to the points nearest the
   smoothed maximum;
3. estimate the Monte Carlo variance of the quadratic's argmax ``b / 2a`` by
   a residual bootstrap around the smoothed curve;
4. use the cutoff ``chi2_1(level) * (a * se_mc^2 + 1/2)``, which is the Wilks
   cutoff ``chi2_1(level) / 2`` when the Monte Carlo error vanishes;
5. report where the smoothed curve crosses ``max - cutoff``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .core import ConfigError, ParamVector, PompModel, TimeSeries
from .mif2 import Mif2Settings, evaluate_candidates, hypercube_starts, mif2
from .parallel import job_rng, run_jobs

logger = logging.getLogger(__name__)


@dataclass
class ProfilePoint:
    value: float
    loglik: float
    se: float
    params: ParamVector | None = None


@dataclass
class McapResult:
    parameter: np.ndarray
    smoothed: np.ndarray
    quadratic: np.ndarray
    quad_coef: tuple
    mle: float
    cutoff: float
    ci: tuple
    level: float
    se_mc: float
    one_sided: tuple = field(default=(False, False))


# --------------------------------------------------------------------------
# Profiles
# --------------------------------------------------------------------------


def _profile_job(model, data, params, target, value, settings, starts, box, replicates, J_eval, seed, key):
    rng = job_rng(seed, *key)
    fixed = params.fix(target, value)
    if not fixed.estimated_names:
        cands = [fixed]
    else:
        cands = [
            mif2(model, data, s, settings, rng).estimate
            for s in hypercube_starts(fixed, box, starts, rng)
        ]
    best = evaluate_candidates(cands, model, data, replicates, J_eval, rng, settings.tol)[0]
    return ProfilePoint(float(value), best.loglik, best.se, best.params)


def profile_likelihood(
    model: PompModel,
    data: TimeSeries,
    params: ParamVector,
    target: str,
    grid,
    settings: Mif2Settings,
    starts: int,
    box: dict,
    replicates: int = 5,
    J_eval: int = 1000,
    seed: int = 0,
    workers: int = 1,
    stream: tuple = (),
    start_index: int = 0,
) -> list:
    """Profile log-likelihood of ``target`` over ``grid``.

    At each grid value the target is fixed and the remaining estimated
    parameters are maximised by IF2 from ``starts`` hypercube starts; the best
    result by replicated particle filtering is kept. Grid point ``i`` draws
    from the stream ``(seed, *stream, start_index + i)``, so results do not
    depend on ``workers``.
    """
    if target not in params.estimated_names:
        raise ConfigError(f"profile target {target!r} is not an estimated parameter")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("profile grid is empty")
    jobs = [
        (model, data, params, target, v, settings, starts, box, replicates, J_eval, seed,
         (*stream, start_index + i))
        for i, v in enumerate(grid)
    ]
    points = run_jobs(_profile_job, jobs, workers)
    return sorted(points, key=lambda p: p.value)


# --------------------------------------------------------------------------
# Smoothing
# --------------------------------------------------------------------------


def _tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**3) ** 3


def _wls_quadratic(x, y, w):
    """Weighted fit of ``c + b x - a x^2``; returns (c, b, a)."""
    X = np.column_stack([np.ones_like(x), x, -(x**2)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return tuple(coef)


class LocalQuadratic:
    """Local quadratic regression with tricube weights (loess, degree 2)."""

    def __init__(self, x, y, span=0.75):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        n = len(self.x)
        self.q = min(n, max(int(math.floor(span * n)), 4))

    def __call__(self, xq):
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        out = np.empty_like(xq)
        for i, x0 in enumerate(xq):
            d = np.abs(self.x - x0)
            h = np.sort(d)[self.q - 1] * (1.0 + 1e-6) + 1e-300
            w = _tricube(d / h)
            keep = w > 0
            xs = self.x[keep] - x0
            c, _, _ = _wls_quadratic(xs, self.y[keep], w[keep])
            out[i] = c
        return out


def _neighbourhood_weights(x, center, span):
    dist = np.abs(x - center)
    n = len(x)
    k = min(n, max(int(math.trunc(span * n)), 3))
    maxdist = np.sort(dist)[k - 1] * (1.0 + 1e-6) + 1e-300
    return _tricube(dist / maxdist)


def mcap(points, level: float = 0.95, span: float = 0.75, ngrid: int = 1000, n_boot: int = 200, rng=None) -> McapResult:
    """Monte Carlo adjusted profile confidence interval.

    ``points`` is a sequence of ProfilePoint or of ``(value, loglik)`` pairs
    (the latter are taken to report no Monte Carlo SE).

    The profile is smoothed by local quadratic regression and a weighted
    quadratic is fitted near the smoothed maximum. The Monte Carlo SE of
    the quadratic's argmax is estimated by a parametric bootstrap around the
    smoother. Each point's noise sd is the larger of its reported SE and the
    root-mean-square residual. The likelihood-ratio cutoff is then
    ``chi2_1(level) * (a * se_mc**2 + 1/2)``, where ``a`` is the fitted
    curvature. With zero noise this is the Wilks interval.
    """
    vals = np.array([p.value if isinstance(p, ProfilePoint) else p[0] for p in points], dtype=float)
    ll = np.array([p.loglik if isinstance(p, ProfilePoint) else p[1] for p in points], dtype=float)
    if len(vals) < 5:
        raise ValueError("mcap needs at least 5 profile points")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    se = np.array([p.se if isinstance(p, ProfilePoint) else 0.0 for p in points], dtype=float)
    se = np.where(np.isfinite(se), se, 0.0)
    ok = np.isfinite(ll)
    vals, ll, se = vals[ok], ll[ok], se[ok]
    order = np.argsort(vals)
    vals, ll, se = vals[order], ll[order], se[order]
    if len(vals) < 5:
        raise ValueError("mcap needs at least 5 finite profile points")
    rng = np.random.default_rng(0) if rng is None else rng

    smooth = LocalQuadratic(vals, ll, span)
    grid = np.linspace(vals[0], vals[-1], ngrid)
    sm = smooth(grid)
    i = int(np.argmax(sm))
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, ngrid - 1)]
    if hi_b > lo_b:
        opt = optimize.minimize_scalar(
            lambda v: -smooth(v)[0], bounds=(lo_b, hi_b), method="bounded", options={"xatol": 1e-12}
        )
        mle = float(opt.x) if -opt.fun >= sm[i] else float(grid[i])
    else:
        mle = float(grid[i])
    top = float(smooth(mle)[0])

    w = _neighbourhood_weights(vals, mle, span)
    c, b, a = _wls_quadratic(vals, ll, w)

    # Monte Carlo noise per point: the larger of its reported SE and the
    # root-mean-square residual around the smoother.
    fitted = smooth(vals)
    resid = ll - fitted
    rms = math.sqrt(float(np.mean(resid**2)))
    if rms <= 1e-12 * max(1.0, float(np.abs(ll).max())):
        rms = 0.0
    sd = np.maximum(se, rms)
    se2 = 0.0
    if np.any(sd > 0):
        z = rng.standard_normal((n_boot, len(vals)))
        argmax = []
        for zb in z:
            _, bb, ab = _wls_quadratic(vals, fitted + sd * zb, w)
            if ab > 0:
                argmax.append(bb / (2 * ab))
        if len(argmax) >= 2:
            se2 = float(np.var(argmax, ddof=1))
    chi = stats.chi2.ppf(level, df=1)
    cutoff = chi * (max(a, 0.0) * se2 + 0.5)
    target = top - cutoff

    f = lambda v: smooth(v)[0] - target  # noqa: E731
    lower, lo_open = _crossing(grid, sm, target, mle, f, -1)
    upper, hi_open = _crossing(grid, sm, target, mle, f, +1)
    if lo_open or hi_open:
        warnings.warn("smoothed profile does not fall below the cutoff on both sides; "
                      "interval is one-sided at the grid boundary", RuntimeWarning, stacklevel=2)
    quad = c + b * grid - a * grid**2
    return McapResult(grid, sm, quad, (c, b, a), mle, float(cutoff), (lower, upper), level,
                      math.sqrt(se2), (lo_open, hi_open))


def _crossing(grid, sm, target, mle, f, direction):
    """First crossing of ``target`` moving away from ``mle``; refined by root finding."""
    if direction < 0:
        idx = np.flatnonzero((grid < mle) & (sm < target))
        if len(idx) == 0:
            return float(grid[0]), True
        k = idx[-1]
        a, b = grid[k], min(grid[k + 1], mle)
    else:
        idx = np.flatnonzero((grid > mle) & (sm < target))
        if len(idx) == 0:
            return float(grid[-1]), True
        k = idx[0]
        a, b = max(grid[k - 1], mle), grid[k]
    fa, fb = f(a), f(b)
    if fa * fb > 0:
        # linear interpolation between grid evaluations
        return float(a + (b - a) * (target - sm[k]) / (sm[k + (1 if direction < 0 else -1)] - sm[k])), False
    return float(optimize.brentq(f, a, b, xtol=1e-14)), False


# --------------------------------------------------------------------------
# Grids
# --------------------------------------------------------------------------


def default_grid(center: float, sd: float, n: int = 20, width: float = 4.0, scale=None) -> np.ndarray:
    """``n`` evenly spaced values over ``center +- width * sd``, clipped inside ``scale``."""
    if sd <= 0 or n < 1:
        raise ConfigError("default grid needs a positive sd and at least one point")
    lo, hi = center - width * sd, center + width * sd
    if scale is not None:
        a, b = scale.bounds
        eps = 1e-6 * (hi - lo)
        lo, hi = max(lo, a + eps), min(hi, b - eps)
    return np.linspace(lo, hi, n)


def refine_grid(grid, result: McapResult, extra: int = 3) -> np.ndarray:
    """New grid values (not already in ``grid``) between the points that bracket each crossing."""
    grid = np.sort(np.asarray(grid, dtype=float))
    new = []
    for bound, open_ in zip(result.ci, result.one_sided):
        if open_:
            continue
        k = int(np.clip(np.searchsorted(grid, bound), 1, len(grid) - 1))
        new.extend(np.linspace(grid[k - 1], grid[k], extra + 2)[1:-1])
    return np.setdiff1d(np.array(new, dtype=float), grid)
