"""Likelihood-based inference for partially observed Markov process (POMP) epidemic models.

Particle filtering, iterated filtering (IF2), stochastic simulators for
compartmental models and Monte Carlo adjusted profile intervals.
"""

from .core import (
    BoundaryError,
    ConfigError,
    DataError,
    ModelError,
    ParamSpace,
    ParamVector,
    PompError,
    PompModel,
    Scale,
    TimeSeries,
    validate_model,
)
from .mif2 import Mif2Result, Mif2Settings, cooling_intensity, evaluate_candidates, mif2
from .models import SIRModel, SIRSModel, SkeletonModel, make_model
from .pfilter import FilterResult, naive_mc_loglik, particle_filter
from .profile import McapResult, ProfilePoint, mcap, profile_likelihood
from .simulators import simulate_path

__version__ = "0.1.0"

__all__ = [
    "BoundaryError", "ConfigError", "DataError", "ModelError", "PompError",
    "ParamSpace", "ParamVector", "PompModel", "Scale", "TimeSeries", "validate_model",
    "Mif2Result", "Mif2Settings", "cooling_intensity", "evaluate_candidates", "mif2",
    "SIRModel", "SIRSModel", "SkeletonModel", "make_model",
    "FilterResult", "naive_mc_loglik", "particle_filter",
    "McapResult", "ProfilePoint", "mcap", "profile_likelihood",
    "simulate_path",
]
