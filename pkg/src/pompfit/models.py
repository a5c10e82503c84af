"""Reference epidemic models.

``sir``: closed SIR with weekly incidence observed as Poisson(kappa * H).

``sirs``: SIRS with births/deaths, waning immunity, cosine seasonal forcing,
gamma white noise on transmission and negative-binomial reporting,
initialised at the endemic equilibrium of the unforced skeleton.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from . import kernels
from ._accel import resolve_backend
from .core import POSITIVE, UNIT, ModelError, ParamVector, PompModel, interval, substeps
from .simulators import Reaction, ReactionSet, gillespie_advance, tauleap_advance

S, I, R, H = 0, 1, 2, 3


def seasonal_beta(t, beta, rho, phi, w=52.0):
    """Cosine-forced transmission rate, between (1 - rho) beta and (1 + rho) beta."""
    return beta * (1.0 + rho * np.cos(2.0 * np.pi * np.asarray(t) / w + phi))


# --------------------------------------------------------------------------
# Observation models
# --------------------------------------------------------------------------


def poisson_obs_logdensity(y, H, kappa=1.0):
    """log Poisson(y; kappa*H). Missing ``y`` (nan) contributes 0."""
    lam = np.asarray(kappa, dtype=float) * np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.xlogy(y, lam) - lam - special.gammaln(y + 1.0)
    return np.where(np.isnan(y), 0.0, out)


def negbin_obs_logdensity(y, H, psi, kappa=1.0):
    """Negative binomial log-pmf with mean m = kappa*H and variance m + psi*m^2."""
    m = np.asarray(kappa, dtype=float) * np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    size = 1.0 / np.asarray(psi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            special.gammaln(y + size)
            - special.gammaln(size)
            - special.gammaln(y + 1.0)
            - size * np.log1p(m / size)
            + special.xlogy(y, m)
            - special.xlogy(y, size + m)
        )
    return np.where(np.isnan(y), 0.0, out)


def poisson_obs_sample(H, kappa, rng):
    return rng.poisson(np.asarray(kappa, float) * np.asarray(H, float)).astype(float)


def negbin_obs_sample(H, psi, kappa, rng):
    m = np.asarray(kappa, float) * np.asarray(H, float)
    size = 1.0 / np.asarray(psi, float)
    return rng.negative_binomial(size, size / (size + m)).astype(float)


# --------------------------------------------------------------------------
# Reactions and skeletons
# --------------------------------------------------------------------------

SIR_PARAMS = ("beta", "gamma", "N", "I0", "kappa")
SIRS_PARAMS = ("beta", "rho", "phi", "sigma2", "psi", "gamma", "omega", "mu", "N", "w", "kappa")
_SIR = {k: i for i, k in enumerate(SIR_PARAMS)}
_SIRS = {k: i for i, k in enumerate(SIRS_PARAMS)}


def _sir_rates(x, theta, t, xi):
    beta, gamma, N = theta[:, _SIR["beta"]], theta[:, _SIR["gamma"]], theta[:, _SIR["N"]]
    return np.stack([beta * x[:, I] * x[:, S] / N, gamma * x[:, I]], axis=1)


def sir_reactions() -> ReactionSet:
    """S -> I at beta*I*S/N (counted in H) and I -> R at gamma*I."""
    return ReactionSet(
        ("S", "I", "R"),
        (Reaction("infection", S, I, incidence=True), Reaction("recovery", I, R)),
        _sir_rates,
    )


def _sirs_rates(x, theta, t, xi):
    c = lambda k: theta[:, _SIRS[k]]  # noqa: E731
    bt = seasonal_beta(t, c("beta"), c("rho"), c("phi"), c("w")) * xi
    mu, N = c("mu"), c("N")
    return np.stack(
        [
            mu * N,
            bt * x[:, I] * x[:, S] / N,
            c("gamma") * x[:, I],
            c("omega") * x[:, R],
            mu * x[:, S],
            mu * x[:, I],
            mu * x[:, R],
        ],
        axis=1,
    )


def _sirs_noise(theta):
    return theta[:, _SIRS["sigma2"]]


def sirs_reactions(noise: bool = True) -> ReactionSet:
    """Births, seasonal noisy infection, recovery, waning and deaths from each compartment.

    The rate function's ``xi`` argument multiplies the infection rate only.
    """
    return ReactionSet(
        ("S", "I", "R"),
        (
            Reaction("birth", None, S),
            Reaction("infection", S, I, incidence=True),
            Reaction("recovery", I, R),
            Reaction("waning", R, S),
            Reaction("death_S", S, None),
            Reaction("death_I", I, None),
            Reaction("death_R", R, None),
        ),
        _sirs_rates,
        noise_var=_sirs_noise if noise else None,
        balance_births=True,
    )


def sir_skeleton(x, theta, t=0.0):
    """Deterministic SIR vector field on real-valued (S, I, R, H)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_2d(theta)
    beta, gamma, N = theta[:, _SIR["beta"]], theta[:, _SIR["gamma"]], theta[:, _SIR["N"]]
    inf = beta * x[:, I] * x[:, S] / N
    rec = gamma * x[:, I]
    return np.stack([-inf, inf - rec, rec, inf], axis=1)


def sirs_skeleton(x, theta, t=0.0):
    """Deterministic SIRS vector field with seasonal forcing and demography."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_2d(theta)
    c = lambda k: theta[:, _SIRS[k]]  # noqa: E731
    mu, N = c("mu"), c("N")
    inf = seasonal_beta(t, c("beta"), c("rho"), c("phi"), c("w")) * x[:, I] * x[:, S] / N
    rec = c("gamma") * x[:, I]
    wane = c("omega") * x[:, R]
    return np.stack(
        [
            mu * N - inf + wane - mu * x[:, S],
            inf - rec - mu * x[:, I],
            rec - wane - mu * x[:, R],
            inf,
        ],
        axis=1,
    )


def sirs_equilibrium(theta) -> np.ndarray:
    """Real-valued endemic equilibrium (S, I, R) of the unforced SIRS skeleton."""
    theta = np.atleast_2d(theta)
    c = lambda k: theta[:, _SIRS[k]]  # noqa: E731
    beta, gamma, omega, mu, N = c("beta"), c("gamma"), c("omega"), c("mu"), c("N")
    r0 = beta / (gamma + mu)
    if np.any(r0 <= 1):
        raise ModelError(f"no endemic equilibrium: beta/(gamma+mu) = {float(np.min(r0)):.4g} <= 1")
    s = N * (gamma + mu) / beta
    i = (N - s) * (omega + mu) / (omega + mu + gamma)
    return np.stack([s, i, N - s - i], axis=1)


def sirs_stationary_init(theta) -> np.ndarray:
    """Integer (S, I, R, H=0) at the rounded endemic equilibrium, S + I + R = N."""
    eq = sirs_equilibrium(theta)
    N = np.rint(np.atleast_2d(theta)[:, _SIRS["N"]]).astype(np.int64)
    s = np.rint(eq[:, 0]).astype(np.int64)
    i = np.rint(eq[:, 1]).astype(np.int64)
    return np.stack([s, i, N - s - i, np.zeros_like(s)], axis=1)


def rk4_advance(field, x, theta, t_start, t_end, dt):
    """Integrate ``field`` with classical RK4 over equal substeps; accumulator starts at 0."""
    x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    x[:, -1] = 0.0
    n = substeps(t_start, t_end, dt)
    h = (t_end - t_start) / n
    t = t_start
    for _ in range(n):
        k1 = field(x, theta, t)
        k2 = field(x + 0.5 * h * k1, theta, t + 0.5 * h)
        k3 = field(x + 0.5 * h * k2, theta, t + 0.5 * h)
        k4 = field(x + h * k3, theta, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return x


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------


class _KernelModel(PompModel):
    closed_population = True
    statenames = ("S", "I", "R", "H")

    def __init__(self, dt=0.01, t0=0.0, backend=None, parallel=False):
        super().__init__(dt, t0)
        self.backend = resolve_backend(backend)
        self.parallel = bool(parallel)

    def __repr__(self):
        return f"{type(self).__name__}(dt={self.dt}, t0={self.t0}, backend={self.backend!r})"

    def _cols(self, theta, names):
        return [np.ascontiguousarray(self.col(theta, k), dtype=float) for k in names]

    def rprocess_gillespie(self, x, theta, t_start, t_end, rng):
        return gillespie_advance(x, self.reactions(), theta, t_start, t_end, self.dt, rng)


class SIRModel(_KernelModel):
    name = "sir"
    param_names = SIR_PARAMS

    def default_params(self) -> ParamVector:
        return ParamVector.from_dict(
            {"beta": 1.0, "gamma": 0.5, "N": 10000.0, "I0": 1.0, "kappa": 1.0},
            {"beta": POSITIVE, "gamma": POSITIVE, "N": POSITIVE, "I0": POSITIVE, "kappa": UNIT},
            estimated=("beta", "gamma"),
        )

    def reactions(self) -> ReactionSet:
        return sir_reactions()

    def rinit(self, theta, rng=None):
        N = np.rint(self.col(theta, "N")).astype(np.int64)
        I0 = np.rint(self.col(theta, "I0")).astype(np.int64)
        if np.any(I0 < 1) or np.any(I0 > N):
            raise ModelError("initial infectious count must lie in [1, N]")
        zero = np.zeros_like(N)
        return np.stack([N - I0, I0, zero, zero], axis=1)

    def rprocess(self, x, theta, t_start, t_end, rng):
        if self.backend == "numpy":
            return tauleap_advance(x, self.reactions(), theta, t_start, t_end, self.dt, rng)
        x = np.array(x, dtype=np.int64, order="C")
        n = substeps(t_start, t_end, self.dt)
        beta, gamma, N = self._cols(theta, ("beta", "gamma", "N"))
        kern = kernels.sir_tauleap_parallel if self.parallel else kernels.sir_tauleap
        return kern(x, beta, gamma, N, (t_end - t_start) / n, n, kernels.particle_seeds(rng, x.shape[0]))

    def rprocess_gillespie(self, x, theta, t_start, t_end, rng):
        if self.backend == "numpy":
            return super().rprocess_gillespie(x, theta, t_start, t_end, rng)
        x = np.array(x, dtype=np.int64, order="C")
        beta, gamma, N = self._cols(theta, ("beta", "gamma", "N"))
        seeds = kernels.particle_seeds(rng, x.shape[0])
        return kernels.sir_gillespie(x, beta, gamma, N, float(t_start), float(t_end), seeds)

    def dmeasure(self, y, x, theta):
        return poisson_obs_logdensity(y, x[:, H], self.col(theta, "kappa"))

    def rmeasure(self, x, theta, rng):
        return poisson_obs_sample(x[:, H], self.col(theta, "kappa"), rng)

    def skeleton(self, x, theta, t=0.0):
        return sir_skeleton(x, theta, t)


class SIRSModel(_KernelModel):
    """Seasonal SIRS. Defaults for the fixed rates are declared here, not taken from data."""

    name = "sirs"
    param_names = SIRS_PARAMS

    def __init__(self, dt=0.01, t0=0.0, backend=None, parallel=False, noise=True):
        super().__init__(dt, t0, backend, parallel)
        self.noise = bool(noise)

    def default_params(self) -> ParamVector:
        return ParamVector.from_dict(
            {
                "beta": 2.0,
                "rho": 0.2,
                "phi": 1.0,
                "sigma2": 0.01,
                "psi": 0.05,
                "gamma": 1.0,
                "omega": 1.0 / 26.0,
                "mu": 1.0 / (52.0 * 70.0),
                "N": 1000000.0,
                "w": 52.0,
                "kappa": 1.0,
            },
            {
                "beta": POSITIVE,
                "rho": UNIT,
                "phi": interval(0.0, 2.0 * math.pi),
                "sigma2": POSITIVE,
                "psi": POSITIVE,
                "gamma": POSITIVE,
                "omega": POSITIVE,
                "mu": POSITIVE,
                "N": POSITIVE,
                "w": POSITIVE,
                "kappa": UNIT,
            },
            estimated=("beta", "rho", "phi", "sigma2", "psi"),
        )

    def reactions(self) -> ReactionSet:
        return sirs_reactions(self.noise)

    def rinit(self, theta, rng=None):
        return sirs_stationary_init(theta)

    def rprocess(self, x, theta, t_start, t_end, rng):
        if self.backend == "numpy":
            return tauleap_advance(x, self.reactions(), theta, t_start, t_end, self.dt, rng)
        x = np.array(x, dtype=np.int64, order="C")
        n = substeps(t_start, t_end, self.dt)
        cols = self._cols(theta, ("beta", "rho", "phi", "w", "sigma2", "gamma", "omega", "mu", "N"))
        if not self.noise:
            cols[4] = np.zeros_like(cols[4])
        kern = kernels.sirs_tauleap_parallel if self.parallel else kernels.sirs_tauleap
        seeds = kernels.particle_seeds(rng, x.shape[0])
        return kern(x, *cols, float(t_start), (t_end - t_start) / n, n, seeds)

    def dmeasure(self, y, x, theta):
        return negbin_obs_logdensity(y, x[:, H], self.col(theta, "psi"), self.col(theta, "kappa"))

    def rmeasure(self, x, theta, rng):
        return negbin_obs_sample(x[:, H], self.col(theta, "psi"), self.col(theta, "kappa"), rng)

    def skeleton(self, x, theta, t=0.0):
        return sirs_skeleton(x, theta, t)


class SkeletonModel(PompModel):
    """Deterministic counterpart of a model: its skeleton integrated by RK4."""

    def __init__(self, base: PompModel):
        if not base.has_skeleton:
            raise ModelError(f"model {base.name!r} has no deterministic skeleton")
        self.base = base
        self.name = f"{base.name}-skeleton"
        self.statenames = base.statenames
        self.param_names = base.param_names
        self.closed_population = base.closed_population
        super().__init__(base.dt, base.t0)

    def default_params(self):
        return self.base.default_params()

    def rinit(self, theta, rng=None):
        return self.base.rinit(theta, rng).astype(float)

    def rprocess(self, x, theta, t_start, t_end, rng=None):
        return rk4_advance(self.base.skeleton, x, theta, t_start, t_end, self.dt)

    def dmeasure(self, y, x, theta):
        return self.base.dmeasure(y, x, theta)

    def rmeasure(self, x, theta, rng):
        return self.base.rmeasure(x, theta, rng)

    def skeleton(self, x, theta, t=0.0):
        return self.base.skeleton(x, theta, t)


MODELS = {"sir": SIRModel, "sirs": SIRSModel}


def make_model(name: str, **kwargs) -> PompModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ModelError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**kwargs)
