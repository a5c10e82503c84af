"""Run configuration read from a YAML file.

Complete examples live in ``configs/`` at the repository root. The
top-level keys are:

``model``      model name (``sir`` or ``sirs``)
``dt``         τ-leap step in weeks
``backend``    ``numba`` or ``numpy`` (default: numba when importable)
``parallel_filter``  use the thread-parallel kernels inside one filter
``seed``       master seed, required
``workers``    processes for independent jobs
``out``        output directory
``data``       data CSV; defaults to ``<out>/data.csv``
``params``     per-parameter ``value``, ``estimate``, ``lower``, ``upper``, ``scale``
``simulate``   ``weeks``, ``method``, ``min_final_size``, ``max_tries``
``pfilter``    ``particles``, ``replicates``, ``tol``, ``resampling``
``mif2``       ``starts``, ``iterations``, ``particles``, ``rw_sd``, ``cooling_fraction``,
               ``cooling_horizon``, ``eval_particles``, ``eval_replicates``
``profile``    ``target``, ``grid``, ``level``, ``span``, ``starts``, ``refine``, and
               optional ``iterations``, ``particles``, ``eval_particles``, ``eval_replicates``,
               and ``box`` (starting box for nuisance parameters, by name)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .core import ConfigError, ModelError, ParamVector, PompModel, Scale
from .mif2 import Mif2Settings
from .models import make_model
from .pfilter import DEFAULT_TOL

_TOP_KEYS = {
    "model", "dt", "backend", "parallel_filter", "seed", "workers", "out", "data",
    "params", "simulate", "pfilter", "mif2", "profile",
}


@dataclass(frozen=True)
class SimulateSettings:
    weeks: int = 50
    method: str = "tauleap"
    min_final_size: float = 0.0
    max_tries: int = 1000


@dataclass(frozen=True)
class PfilterSettings:
    particles: int = 1000
    replicates: int = 10
    tol: float = DEFAULT_TOL
    resampling: str = "multinomial"


@dataclass(frozen=True)
class ProfileSettings:
    targets: tuple = ()
    grid: object = None
    level: float = 0.95
    span: float = 0.75
    starts: int = 2
    refine: bool = False
    iterations: int | None = None
    particles: int | None = None
    eval_particles: int = 1000
    eval_replicates: int = 5
    box: dict | None = None


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: ParamVector
    box: dict
    seed: int
    dt: float = 0.01
    backend: str | None = None
    parallel_filter: bool = False
    workers: int = 1
    out: Path = Path("results")
    data: Path | None = None
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    pfilter: PfilterSettings = field(default_factory=PfilterSettings)
    mif2: Mif2Settings = field(default_factory=Mif2Settings)
    mif2_starts: int = 10
    eval_particles: int = 1000
    eval_replicates: int = 10
    profile: ProfileSettings = field(default_factory=ProfileSettings)

    @property
    def data_path(self) -> Path:
        return self.data if self.data is not None else self.out / "data.csv"

    def build_model(self) -> PompModel:
        return make_model(self.model, dt=self.dt, backend=self.backend, parallel=self.parallel_filter)

    def with_overrides(self, seed=None, workers=None, out=None) -> "RunConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = _check_seed(seed)
        if workers is not None:
            if workers < 1:
                raise ConfigError("workers must be at least 1")
            kw["workers"] = int(workers)
        if out is not None:
            kw["out"] = Path(out)
        return replace(self, **kw)


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    return int(seed)


def _section(raw: dict, key: str, cls, rename=None):
    sub = raw.get(key) or {}
    if not isinstance(sub, dict):
        raise ConfigError(f"{key}: expected a mapping")
    rename = rename or {}
    allowed = {f for f in cls.__dataclass_fields__} | set(rename)
    kw = {}
    for k, v in sub.items():
        if k not in allowed:
            raise ConfigError(f"{key}.{k}: unknown setting")
        kw[rename.get(k, k)] = v
    return kw


def _parse_params(raw_params, model: PompModel):
    defaults = model.default_params()
    if raw_params is None:
        raw_params = {}
    if not isinstance(raw_params, dict):
        raise ConfigError("params: expected a mapping")
    values = defaults.as_dict()
    scales = dict(zip(defaults.names, defaults.scales))
    estimated = set(defaults.estimated_names)
    box = {}
    for name, spec in raw_params.items():
        if name not in values:
            raise ConfigError(f"params.{name}: unknown parameter for model {model.name!r}")
        if isinstance(spec, dict):
            unknown = set(spec) - {"value", "estimate", "lower", "upper", "scale"}
            if unknown:
                raise ConfigError(f"params.{name}: unknown keys {sorted(unknown)}")
            if "value" in spec:
                values[name] = _float(spec["value"], f"params.{name}.value")
            if "scale" in spec:
                try:
                    scales[name] = Scale.parse(spec["scale"])
                except (ValueError, TypeError) as e:
                    raise ConfigError(f"params.{name}.scale: {e}") from None
            if "estimate" in spec:
                (estimated.add if spec["estimate"] else estimated.discard)(name)
            if "lower" in spec or "upper" in spec:
                if not ("lower" in spec and "upper" in spec):
                    raise ConfigError(f"params.{name}: give both lower and upper")
                lo = _float(spec["lower"], f"params.{name}.lower")
                hi = _float(spec["upper"], f"params.{name}.upper")
                if not lo < hi:
                    raise ConfigError(f"params.{name}: lower must be below upper")
                box[name] = (lo, hi)
        else:
            values[name] = _float(spec, f"params.{name}")
            estimated.discard(name)
    params = ParamVector(defaults.names, [values[k] for k in defaults.names],
                         [scales[k] for k in defaults.names], [k in estimated for k in defaults.names])
    for name, v, s, est in zip(params.names, params.values, params.scales, params.estimated):
        lo, hi = s.bounds
        # fixed values may sit on the closed boundary (e.g. beta = 0 switches transmission off)
        ok = s.contains(v) if est else (np.isfinite(v) and lo <= v <= hi)
        if not ok:
            raise ConfigError(f"params.{name}: value {v} outside its {s.kind} scale")
    for name in params.estimated_names:
        if name not in box:
            raise ConfigError(f"params.{name}: estimated parameters need lower and upper bounds")
        s = params.scales[params.index(name)]
        if not (s.contains(box[name][0]) and s.contains(box[name][1])):
            raise ConfigError(f"params.{name}: bounds lie outside the {s.kind} scale")
    return params, box


def _float(v, where) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"{where}: expected a number")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number") from None


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a decoded YAML mapping and build a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a mapping at the top level")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError("model: required")
    if "seed" not in raw:
        raise ConfigError("seed: required (no wall-clock default)")
    seed = _check_seed(raw["seed"])
    dt = _float(raw.get("dt", 0.01), "dt")
    if dt <= 0:
        raise ConfigError("dt: must be positive")
    backend = raw.get("backend")
    if backend not in (None, "numba", "numpy"):
        raise ConfigError("backend: expected numba or numpy")
    try:
        model = make_model(str(raw["model"]), dt=dt, backend=backend)
    except ModelError as e:
        raise ConfigError(f"model: {e}") from None
    params, box = _parse_params(raw.get("params"), model)

    base_dir = Path(base_dir) if base_dir is not None else Path(".")
    out = base_dir / str(raw.get("out", "results"))
    data = base_dir / str(raw["data"]) if raw.get("data") else None

    try:
        simulate = SimulateSettings(**_section(raw, "simulate", SimulateSettings))
        pfilter = PfilterSettings(**_section(raw, "pfilter", PfilterSettings))
        m = _section(raw, "mif2", Mif2Settings, rename={"starts": "_starts", "eval_particles": "_ep",
                                                        "eval_replicates": "_er"})
        starts = int(m.pop("_starts", 10))
        ep = int(m.pop("_ep", 1000))
        er = int(m.pop("_er", 10))
        mif2 = Mif2Settings(**m)
        mif2.sd_vector(params)
        p = _section(raw, "profile", ProfileSettings, rename={"target": "targets"})
        t = p.get("targets", ())
        p["targets"] = (t,) if isinstance(t, str) else tuple(t)
        if p.get("box") is not None:
            p["box"] = _profile_box(p["box"], params)
        profile = ProfileSettings(**p)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    _validate(simulate, pfilter, starts, ep, er, profile, params)
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers: must be a positive integer")
    return RunConfig(
        model=model.name, params=params, box=box, seed=seed, dt=dt, backend=backend,
        parallel_filter=bool(raw.get("parallel_filter", False)), workers=workers, out=out, data=data,
        simulate=simulate, pfilter=pfilter, mif2=mif2, mif2_starts=starts, eval_particles=ep,
        eval_replicates=er, profile=profile,
    )


def _validate(sim, pf, starts, ep, er, prof, params):
    if sim.weeks < 1:
        raise ConfigError("simulate.weeks: must be at least 1")
    if sim.method not in ("tauleap", "gillespie"):
        raise ConfigError("simulate.method: expected tauleap or gillespie")
    if pf.particles < 1:
        raise ConfigError("pfilter.particles: must be at least 1")
    if pf.replicates < 2:
        raise ConfigError("pfilter.replicates: need at least 2 for a standard error")
    if pf.tol <= 0:
        raise ConfigError("pfilter.tol: must be positive")
    if pf.resampling not in ("multinomial", "systematic"):
        raise ConfigError("pfilter.resampling: expected multinomial or systematic")
    if starts < 1:
        raise ConfigError("mif2.starts: must be at least 1")
    if ep < 1 or er < 2:
        raise ConfigError("mif2.eval_particles/eval_replicates: need J >= 1 and at least 2 replicates")
    for t in prof.targets:
        if t not in params.estimated_names:
            raise ConfigError(f"profile.target: {t!r} is not an estimated parameter")
    if not 0 < prof.level < 1:
        raise ConfigError("profile.level: must lie in (0, 1)")
    if prof.starts < 1 or prof.eval_particles < 1 or prof.eval_replicates < 2:
        raise ConfigError("profile: need starts >= 1, eval_particles >= 1, eval_replicates >= 2")
    if not 0 < prof.span <= 1:
        raise ConfigError("profile.span: must lie in (0, 1]")


def _profile_box(raw, params: ParamVector) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("profile.box: expected a mapping of name to [lower, upper]")
    box = {}
    for name, pair in raw.items():
        if name not in params.estimated_names:
            raise ConfigError(f"profile.box.{name}: not an estimated parameter")
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"profile.box.{name}: expected [lower, upper]")
        lo, hi = (_float(v, f"profile.box.{name}") for v in pair)
        s = params.scales[params.index(name)]
        if not (lo < hi and s.contains(lo) and s.contains(hi)):
            raise ConfigError(f"profile.box.{name}: need lower < upper inside the parameter's domain")
        box[name] = (lo, hi)
    return box


def load_config(path) -> RunConfig:
    """Read and validate a YAML config file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    return parse_config(raw, path.parent)


def profile_grid(spec, center: float, scale: Scale) -> np.ndarray:
    """Grid values from a config ``profile.grid`` entry.

    Accepted forms: a list of values; ``{lower, upper, points}``; or
    ``{sd, points, width}`` centred on the current estimate.
    """
    from .profile import default_grid

    if spec is None:
        raise ConfigError("profile.grid: required")
    if isinstance(spec, (list, tuple)):
        return np.array([_float(v, "profile.grid") for v in spec])
    if not isinstance(spec, dict):
        raise ConfigError("profile.grid: expected a list or a mapping")
    n = int(spec.get("points", 20))
    if "sd" in spec:
        return default_grid(center, _float(spec["sd"], "profile.grid.sd"), n,
                            _float(spec.get("width", 4.0), "profile.grid.width"), scale)
    if "lower" in spec and "upper" in spec:
        return np.linspace(_float(spec["lower"], "profile.grid.lower"),
                           _float(spec["upper"], "profile.grid.upper"), n)
    raise ConfigError("profile.grid: give a list, {lower, upper, points} or {sd, points}")
