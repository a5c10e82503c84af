"""Shared POMP abstractions: parameters, data, model interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import special


class PompError(Exception):
    """Base class for library errors."""


class ConfigError(PompError):
    pass


class DataError(PompError):
    pass


class ModelError(PompError):
    pass


class BoundaryError(ModelError):
    """A parameter sits on the boundary of its domain and cannot be transformed."""

    def __init__(self, name: str, value: float):
        super().__init__(f"parameter {name!r}={value!r} is on or outside its domain boundary")
        self.name = name
        self.value = value


# --------------------------------------------------------------------------
# Scales
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scale:
    """Domain of a parameter and the map to the unconstrained estimation scale.

    ``positive`` uses log, ``unit`` uses logit, ``interval`` uses a logit of
    the rescaled value, ``real`` is the identity.
    """

    kind: str = "real"
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if self.kind not in ("real", "positive", "unit", "interval"):
            raise ValueError(f"unknown scale kind {self.kind!r}")
        if self.kind == "interval" and not (self.lo < self.hi):
            raise ValueError("interval scale needs lo < hi")

    @classmethod
    def parse(cls, spec) -> "Scale":
        """Build from a config value: a kind name, a ``[lo, hi]`` pair or a Scale."""
        if isinstance(spec, Scale):
            return spec
        if isinstance(spec, str):
            if spec == "interval":
                raise ValueError("interval scale needs bounds, use [lo, hi]")
            return cls(spec)
        lo, hi = spec
        return interval(float(lo), float(hi))

    @property
    def bounds(self) -> tuple:
        """Open natural-scale domain ``(lo, hi)``."""
        if self.kind == "positive":
            return (0.0, math.inf)
        if self.kind == "unit":
            return (0.0, 1.0)
        return (self.lo, self.hi)

    def contains(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        if self.kind == "positive":
            return value > 0
        if self.kind == "unit":
            return (value > 0) & (value < 1)
        if self.kind == "interval":
            return (value > self.lo) & (value < self.hi)
        return np.isfinite(value)

    def forward(self, value):
        value = np.asarray(value, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "positive":
                return np.log(value)
            if self.kind == "unit":
                return special.logit(value)
            if self.kind == "interval":
                return special.logit((value - self.lo) / (self.hi - self.lo))
        return value.copy()

    def inverse(self, value):
        value = np.asarray(value, dtype=float)
        if self.kind == "positive":
            return np.exp(value)
        if self.kind == "unit":
            return special.expit(value)
        if self.kind == "interval":
            return self.lo + (self.hi - self.lo) * special.expit(value)
        return value.copy()


POSITIVE = Scale("positive")
UNIT = Scale("unit")
REAL = Scale("real")


def interval(lo: float, hi: float) -> Scale:
    return Scale("interval", lo, hi)


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamVector:
    """Named parameter values with scale tags and estimated/fixed flags.

    Order of ``names`` is the column order used by every vectorised model
    function, so a model resolves names to indices once.
    """

    names: tuple
    values: np.ndarray
    scales: tuple
    estimated: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scales", tuple(Scale.parse(s) for s in self.scales))
        object.__setattr__(self, "estimated", tuple(bool(e) for e in self.estimated))
        n = len(self.names)
        if not (values.shape == (n,) and len(self.scales) == n and len(self.estimated) == n):
            raise ValueError("names, values, scales and estimated must have equal length")
        if len(set(self.names)) != n:
            raise ValueError("duplicate parameter names")

    @classmethod
    def from_dict(
        cls,
        values: Mapping[str, float],
        scales: Mapping[str, object] | None = None,
        estimated: Iterable[str] = (),
    ) -> "ParamVector":
        names = tuple(values)
        scales = scales or {}
        est = set(estimated)
        unknown = est - set(names)
        if unknown:
            raise ValueError(f"estimated parameters not in vector: {sorted(unknown)}")
        return cls(
            names,
            np.array([values[k] for k in names], dtype=float),
            tuple(scales.get(k, REAL) for k in names),
            tuple(k in est for k in names),
        )

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index(name)])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in zip(self.names, self.values)}

    @property
    def estimated_names(self) -> tuple:
        return tuple(k for k, e in zip(self.names, self.estimated) if e)

    @property
    def estimated_mask(self) -> np.ndarray:
        return np.array(self.estimated, dtype=bool)

    def replace(self, **values) -> "ParamVector":
        new = self.values.copy()
        for k, v in values.items():
            new[self.index(k)] = v
        return ParamVector(self.names, new, self.scales, self.estimated)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(self.names, values, self.scales, self.estimated)

    def with_estimated(self, names: Iterable[str]) -> "ParamVector":
        est = set(names)
        return ParamVector(self.names, self.values, self.scales, tuple(k in est for k in self.names))

    def fix(self, name: str, value: float | None = None) -> "ParamVector":
        pv = self if value is None else self.replace(**{name: value})
        flags = list(pv.estimated)
        flags[pv.index(name)] = False
        return ParamVector(pv.names, pv.values, pv.scales, tuple(flags))

    def check(self) -> None:
        """Estimated values must lie inside their domain; fixed ones may sit on its closure."""
        for name, v, s, est in zip(self.names, self.values, self.scales, self.estimated):
            lo, hi = s.bounds
            ok = s.contains(v) if est else bool(np.isfinite(v) and lo <= v <= hi)
            if not ok:
                raise BoundaryError(name, float(v))

    def to_estimation_scale(self) -> np.ndarray:
        out = np.empty(len(self))
        for i, (name, v, s) in enumerate(zip(self.names, self.values, self.scales)):
            out[i] = s.forward(v)
            if not np.isfinite(out[i]):
                raise BoundaryError(name, float(v))
        return out

    def from_estimation_scale(self, est) -> "ParamVector":
        est = np.asarray(est, dtype=float)
        return self.with_values([s.inverse(e) for s, e in zip(self.scales, est)])


class ParamSpace:
    """Vectorised scale maps for a swarm of parameter vectors.

    Only estimated columns are transformed. Fixed columns are carried on the
    natural scale and are written back verbatim, so they stay bit-identical.
    """

    def __init__(self, params: ParamVector):
        self.params = params
        self.names = params.names
        self.mask = params.estimated_mask
        self.est_idx = np.flatnonzero(self.mask)
        self.fixed_idx = np.flatnonzero(~self.mask)
        for i in self.est_idx:
            s = params.scales[i]
            if s.kind != "real" and not s.contains(params.values[i]):
                raise BoundaryError(params.names[i], float(params.values[i]))

    def to_est(self, natural) -> np.ndarray:
        natural = np.asarray(natural, dtype=float)
        out = natural.copy()
        for i in self.est_idx:
            out[..., i] = self.params.scales[i].forward(natural[..., i])
            if not np.all(np.isfinite(out[..., i])):
                raise BoundaryError(self.names[i], float(np.ravel(natural[..., i])[0]))
        return out

    def to_natural(self, est) -> np.ndarray:
        est = np.asarray(est, dtype=float)
        out = est.copy()
        for i in self.est_idx:
            out[..., i] = self.params.scales[i].inverse(est[..., i])
        out[..., self.fixed_idx] = self.params.values[self.fixed_idx]
        return out


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeSeries:
    """Observation times and counts; ``nan`` marks a missing observation."""

    times: np.ndarray
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise DataError("times and values must be 1-d and of equal length")
        if len(times) == 0:
            raise DataError("time series is empty")
        if np.any(np.diff(times) <= 0):
            bad = int(np.flatnonzero(np.diff(times) <= 0)[0]) + 1
            raise DataError(f"times must be strictly increasing (row {bad + 1})")
        if times[0] <= self.t0:
            raise DataError("first observation time must be after t0")
        obs = values[~np.isnan(values)]
        if np.any(obs < 0) or np.any(obs != np.round(obs)):
            raise DataError("observations must be non-negative integers or missing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def weekly(cls, values: Sequence[float], t0: float = 0.0) -> "TimeSeries":
        """Observations at t_n = t0 + n, n = 1..N."""
        values = np.asarray(values, dtype=float)
        return cls(t0 + np.arange(1, len(values) + 1, dtype=float), values, t0)

    def __len__(self):
        return len(self.times)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def blank(self, index: int) -> "TimeSeries":
        values = self.values.copy()
        values[index] = np.nan
        return TimeSeries(self.times, values, self.t0)


# --------------------------------------------------------------------------
# Model interface
# --------------------------------------------------------------------------


def substeps(t_start: float, t_end: float, dt: float) -> int:
    """Number of equal substeps so that no step straddles ``t_end``."""
    return max(1, int(math.ceil((t_end - t_start) / dt - 1e-9)))


class PompModel:
    """Vectorised POMP model.

    States are ``(J, V)`` arrays with columns ``statenames``; the last column
    is the incidence accumulator ``H``. Parameters are ``(J, P)`` natural-scale
    arrays with columns ``param_names``. Subclasses implement ``rinit``,
    ``rprocess``, ``dmeasure`` and ``rmeasure``; ``skeleton`` is optional.
    """

    name = "pomp"
    statenames: tuple = ()
    param_names: tuple = ()
    closed_population = False

    def __init__(self, dt: float = 0.01, t0: float = 0.0):
        if dt <= 0:
            raise ModelError("simulation step must be positive")
        self.dt = float(dt)
        self.t0 = float(t0)
        self._pidx = {k: i for i, k in enumerate(self.param_names)}

    def col(self, theta, name):
        return theta[..., self._pidx[name]]

    def default_params(self) -> ParamVector:
        raise NotImplementedError

    def params(self, values: Mapping[str, float] | None = None, estimated=None) -> ParamVector:
        """Model defaults overridden by ``values``; ``estimated`` names the free ones."""
        pv = self.default_params()
        if values:
            unknown = set(values) - set(pv.names)
            if unknown:
                raise ModelError(f"unknown parameters for {self.name}: {sorted(unknown)}")
            pv = pv.replace(**values)
        if estimated is not None:
            pv = pv.with_estimated(estimated)
        return pv

    def theta_matrix(self, params, J: int) -> np.ndarray:
        """Broadcast a ParamVector (or 1-d/2-d array) to a contiguous ``(J, P)`` array."""
        values = params.values if isinstance(params, ParamVector) else np.asarray(params, float)
        if isinstance(params, ParamVector) and params.names != self.param_names:
            raise ModelError(f"parameter order {params.names} does not match model {self.param_names}")
        return np.ascontiguousarray(np.broadcast_to(values, (J, len(self.param_names))), dtype=float)

    def population(self, theta) -> np.ndarray:
        return self.col(theta, "N")

    def rinit(self, theta, rng):
        raise NotImplementedError

    def rprocess(self, x, theta, t_start, t_end, rng):
        """Advance states from ``t_start`` to ``t_end``; ``H`` counts from zero."""
        raise NotImplementedError

    def dmeasure(self, y, x, theta):
        raise NotImplementedError

    def rmeasure(self, x, theta, rng):
        raise NotImplementedError

    def skeleton(self, x, theta, t):
        raise NotImplementedError

    @property
    def has_skeleton(self):
        return type(self).skeleton is not PompModel.skeleton


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_model(
    model: PompModel,
    params: ParamVector,
    rng: np.random.Generator | None = None,
    n_paths: int = 20,
    n_times: int = 20,
    n_draws: int = 1000,
) -> ValidationReport:
    """Simulate the model and report violated invariants.

    Checks negative counts, population conservation for closed models and
    agreement of the observation sampler mean with the density mean (3 sigma).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    report = ValidationReport()
    try:
        params.check()
    except BoundaryError as err:
        report.violations.append(f"invalid parameters: {err}")
        return report
    theta = model.theta_matrix(params, n_paths)
    x = model.rinit(theta, rng)
    pop = model.population(theta) if model.closed_population else None
    busiest = None
    t = model.t0
    for n in range(n_times):
        x = model.rprocess(x, theta, t, t + 1.0, rng)
        t += 1.0
        if np.any(x < 0):
            report.violations.append(f"negative state count at t={t:g}")
            break
        if pop is not None:
            total = x[:, :3].sum(axis=1)
            if np.any(np.abs(total - pop) > 1e-9 * np.maximum(pop, 1)):
                report.violations.append(f"population not conserved at t={t:g}")
                break
        j = int(np.argmax(x[:, -1]))
        if busiest is None or x[j, -1] > busiest[0][-1]:
            busiest = (x[j].copy(), theta[j])

    state, th = busiest if busiest is not None else (x[0], theta[0])
    draws = model.rmeasure(np.tile(state, (n_draws, 1)), np.tile(th, (n_draws, 1)), rng)
    mean, var = _density_moments(model, state, th)
    if np.isfinite(mean):
        se = math.sqrt(max(var, 1e-12) / n_draws)
        if abs(draws.mean() - mean) > 3 * se:
            report.violations.append(
                f"observation sampler mean {draws.mean():.4g} disagrees with density mean {mean:.4g}"
            )
    return report


def _density_moments(model, state, theta, tail=1e-12):
    """Mean and variance of the observation density by direct summation."""
    ys = np.arange(0, 64)
    total = mean = second = 0.0
    while True:
        logp = np.array([model.dmeasure(float(y), state[None, :], theta[None, :])[0] for y in ys])
        p = np.exp(logp)
        total += p.sum()
        mean += (ys * p).sum()
        second += (ys**2 * p).sum()
        if 1.0 - total < tail or ys[-1] > 1e6:
            break
        ys = ys + len(ys)
    if total <= 0:
        return math.nan, math.nan
    mean /= total
    return mean, second / total - mean**2
