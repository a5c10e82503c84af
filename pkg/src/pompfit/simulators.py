"""Sample paths of compartmental jump processes.

The functions here are generic over a :class:`ReactionSet` and vectorised
over particles (rows). They are the reference implementation and the numpy
fallback for the compiled per-model kernels in :mod:`pompfit.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ModelError, substeps


@dataclass(frozen=True)
class Reaction:
    """One transition. ``source``/``dest`` are compartment indices, ``None`` for birth/death."""

    name: str
    source: int | None
    dest: int | None
    incidence: bool = False


@dataclass(frozen=True)
class ReactionSet:
    """Reactions over ``compartments`` plus a trailing incidence accumulator column.

    ``rate_fn(x, theta, t, xi)`` returns absolute rates, shape ``(J, K)``, for
    float states ``x`` of shape ``(J, V)``; ``xi`` is the multiplicative
    transmission noise (1 when there is none). ``noise_var(theta)`` gives the
    infinitesimal variance per row, or is ``None`` for a noise-free model.
    With ``balance_births`` every death is replaced by a birth, so the total
    population is exactly constant and birth reactions' own rates are ignored.
    """

    compartments: tuple
    reactions: tuple
    rate_fn: Callable
    noise_var: Callable | None = None
    balance_births: bool = False

    @property
    def nvar(self) -> int:
        return len(self.compartments) + 1

    @property
    def stoichiometry(self) -> np.ndarray:
        out = np.zeros((len(self.reactions), self.nvar), dtype=np.int64)
        for k, r in enumerate(self.reactions):
            if r.source is not None:
                out[k, r.source] -= 1
            if r.dest is not None:
                out[k, r.dest] += 1
            if r.incidence:
                out[k, -1] += 1
        return out

    def rates(self, x, theta, t, xi=1.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        theta = np.atleast_2d(theta)
        r = np.asarray(self.rate_fn(x, theta, t, xi), dtype=float)
        bad = ~np.isfinite(r) | (r < 0)
        if bad.any():
            k = int(np.flatnonzero(bad.any(axis=0))[0])
            raise ModelError(f"reaction {self.reactions[k].name!r} has invalid rate {r[bad][0]!r}")
        return r


def euler_multinomial_exits(n: int, rates, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Exit counts per route plus stayers (last entry) for ``n`` individuals.

    Each route ``k`` is taken with probability ``(1 - exp(-R tau)) r_k / R``
    where ``R`` is the total per-capita rate.
    """
    rates = np.asarray(rates, dtype=float)
    total = rates.sum()
    if total > 0:
        p = -math.expm1(-total * tau) * rates / total
    else:
        p = np.zeros_like(rates)
    return rng.multinomial(int(n), np.append(p, max(0.0, 1.0 - p.sum())))


def euler_multinomial_rows(n, rates, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise Euler-multinomial exits, ``(J,)`` counts and ``(J, K)`` per-capita rates.

    Sequential binomial construction; equal in law to :func:`euler_multinomial_exits`.
    """
    n = np.asarray(n, dtype=np.int64)
    rates = np.asarray(rates, dtype=float)
    J, K = rates.shape
    out = np.zeros((J, K), dtype=np.int64)
    total = rates.sum(axis=1)
    remaining = rng.binomial(n, -np.expm1(-total * tau))
    rate_left = total.copy()
    for k in range(K - 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(rate_left > 0, rates[:, k] / rate_left, 0.0)
        d = rng.binomial(remaining, np.clip(p, 0.0, 1.0))
        out[:, k] = d
        remaining = remaining - d
        rate_left = rate_left - rates[:, k]
    out[:, K - 1] = remaining
    return out


def gamma_noise_increment(tau: float, sigma2, rng: np.random.Generator, size=None):
    """Increment of the integrated gamma noise over ``tau``: mean tau, variance tau*sigma2.

    Rows with ``sigma2 == 0`` get exactly ``tau`` and consume no random draws.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if size is not None:
        sigma2 = np.broadcast_to(sigma2, size)
    if sigma2.ndim == 0:
        s2 = float(sigma2)
        return tau if s2 == 0 else float(rng.gamma(tau / s2, s2))
    out = np.full(sigma2.shape, float(tau))
    noisy = sigma2 > 0
    if noisy.any():
        s2 = sigma2[noisy]
        out[noisy] = rng.gamma(tau / s2, s2)
    return out


def tau_leap_step(x, rs: ReactionSet, theta, t: float, tau: float, rng: np.random.Generator):
    """One synchronous Euler-multinomial step for every row of ``x``.

    Exits for each source compartment are drawn from the pre-step state; the
    incidence column is incremented by the events of incidence reactions.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    x = np.atleast_2d(x).astype(np.int64)
    theta = np.atleast_2d(theta)
    J = x.shape[0]
    if theta.shape[0] != J:
        theta = np.broadcast_to(theta, (J, theta.shape[1]))

    xi = 1.0
    if rs.noise_var is not None:
        xi = gamma_noise_increment(tau, rs.noise_var(theta), rng, size=(J,)) / tau
    rates = rs.rates(x, theta, t, xi)

    new = x.copy()
    deaths = np.zeros(J, dtype=np.int64)
    births = []
    by_source: dict = {}
    for k, r in enumerate(rs.reactions):
        if r.source is None:
            births.append(k)
        else:
            by_source.setdefault(r.source, []).append(k)

    for c in sorted(by_source):
        ks = by_source[c]
        n = x[:, c]
        with np.errstate(divide="ignore", invalid="ignore"):
            per_capita = np.where(n[:, None] > 0, rates[:, ks] / n[:, None], 0.0)
        exits = euler_multinomial_rows(n, per_capita, tau, rng)
        for col, k in enumerate(ks):
            d = exits[:, col]
            r = rs.reactions[k]
            new[:, c] -= d
            if r.dest is None:
                deaths += d
            else:
                new[:, r.dest] += d
            if r.incidence:
                new[:, -1] += d

    for k in births:
        r = rs.reactions[k]
        b = deaths if rs.balance_births else rng.poisson(rates[:, k] * tau)
        new[:, r.dest] += b
        if r.incidence:
            new[:, -1] += b

    return new[0] if single else new


def tauleap_advance(x, rs: ReactionSet, theta, t_start, t_end, dt, rng):
    """Advance from ``t_start`` to ``t_end`` in equal substeps; the accumulator starts at 0."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64)).copy()
    x[:, -1] = 0
    n = substeps(t_start, t_end, dt)
    h = (t_end - t_start) / n
    for k in range(n):
        x = tau_leap_step(x, rs, theta, t_start + k * h, h, rng)
    return x


def gillespie_step(x, rs: ReactionSet, theta, t: float, rng: np.random.Generator, xi=1.0, rate_time=None):
    """Next event of the jump process for a single state vector.

    Returns the updated state and the event time; ``inf`` when no event can
    occur. ``rate_time`` freezes the time argument of the rates (used for
    piecewise-constant forcing).
    """
    x = np.asarray(x, dtype=np.int64)
    rates = rs.rates(x[None, :], np.asarray(theta)[None, :], t if rate_time is None else rate_time, xi)[0]
    if rs.balance_births:
        for k, r in enumerate(rs.reactions):
            if r.source is None:
                rates[k] = 0.0
    total = rates.sum()
    if total <= 0:
        return x.copy(), math.inf
    t_next = t + rng.exponential(1.0 / total)
    k = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
    k = min(k, len(rates) - 1)
    new = x + rs.stoichiometry[k]
    r = rs.reactions[k]
    if rs.balance_births and r.dest is None:
        for b in rs.reactions:
            if b.source is None:
                new[b.dest] += 1
                if b.incidence:
                    new[-1] += 1
                break
    return new, t_next


def gillespie_advance(x, rs: ReactionSet, theta, t_start, t_end, dt, rng):
    """Exact event-by-event simulation over ``[t_start, t_end]`` for each row.

    Time-dependent rates and transmission noise are held constant over
    substeps of length ``dt``; an event drawn past a substep boundary is
    discarded, which is exact for piecewise-constant rates.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.int64)).copy()
    theta = np.atleast_2d(theta)
    x[:, -1] = 0
    n = substeps(t_start, t_end, dt)
    h = (t_end - t_start) / n
    for j in range(x.shape[0]):
        th = theta[j if theta.shape[0] > 1 else 0]
        state = x[j]
        for k in range(n):
            a = t_start + k * h
            b = a + h
            xi = 1.0
            if rs.noise_var is not None:
                xi = gamma_noise_increment(h, float(rs.noise_var(th[None, :])[0]), rng) / h
            t = a
            while True:
                new, t_next = gillespie_step(state, rs, th, t, rng, xi=xi, rate_time=a)
                if t_next > b:
                    break
                state, t = new, t_next
        x[j] = state
    return x


def simulate_path(model, params, times, method: str = "tauleap", rng: np.random.Generator | None = None):
    """Simulate one trajectory and its observations at ``times``.

    Returns ``(states, observations)`` with ``states`` of shape ``(N, V)``
    recorded at each time; the accumulator is reset after every record.
    """
    rng = np.random.default_rng() if rng is None else rng
    times = np.asarray(times, dtype=float)
    theta = model.theta_matrix(params, 1)
    x = model.rinit(theta, rng)
    states = np.empty((len(times), len(model.statenames)), dtype=x.dtype)
    obs = np.empty(len(times))
    t = model.t0
    for n, tn in enumerate(times):
        if method == "tauleap":
            x = model.rprocess(x, theta, t, tn, rng)
        elif method == "gillespie":
            x = model.rprocess_gillespie(x, theta, t, tn, rng)
        else:
            raise ValueError(f"unknown simulation method {method!r}")
        states[n] = x[0]
        obs[n] = model.rmeasure(x, theta, rng)[0]
        t = tn
    return states, obs
