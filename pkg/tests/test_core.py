import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pompfit.core import (
    POSITIVE,
    REAL,
    UNIT,
    BoundaryError,
    DataError,
    ParamSpace,
    ParamVector,
    PompModel,
    Scale,
    TimeSeries,
    interval,
    substeps,
    validate_model,
)
from pompfit.models import SIRModel


def test_estimation_scale_hand_values():
    pv = ParamVector.from_dict({"beta": 1.0, "rho": 0.5, "gamma": 0.5},
                               {"beta": POSITIVE, "rho": UNIT, "gamma": POSITIVE})
    est = pv.to_estimation_scale()
    assert est[0] == 0.0
    assert est[1] == 0.0
    assert est[2] == pytest.approx(-0.6931471805599453, abs=1e-15)


@pytest.mark.parametrize("name,value,scale", [("beta", 0.0, POSITIVE), ("rho", 1.0, UNIT), ("rho", 0.0, UNIT)])
def test_boundary_value_names_parameter(name, value, scale):
    pv = ParamVector.from_dict({name: value}, {name: scale})
    with pytest.raises(BoundaryError, match=name):
        pv.to_estimation_scale()


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e6))
def test_positive_round_trip(v):
    back = POSITIVE.inverse(POSITIVE.forward(v))
    assert abs(back - v) <= 1e-12 * v


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_unit_round_trip(v):
    back = UNIT.inverse(UNIT.forward(v))
    assert abs(back - v) <= 1e-12 * max(v, 1e-3)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.01, max_value=2 * math.pi - 0.01))
def test_interval_round_trip(v):
    s = interval(0.0, 2 * math.pi)
    assert abs(s.inverse(s.forward(v)) - v) <= 1e-12 * v


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=-30, max_value=30))
def test_inverse_stays_in_domain(e):
    assert POSITIVE.inverse(e) > 0
    u = UNIT.inverse(e)
    assert 0 < u < 1 or abs(e) > 30


def test_scale_parse():
    assert Scale.parse("positive") == POSITIVE
    assert Scale.parse([0, 2]).kind == "interval"
    with pytest.raises(ValueError):
        Scale.parse("interval")
    with pytest.raises(ValueError):
        Scale("log")


def test_paramvector_is_immutable():
    pv = SIRModel().default_params()
    with pytest.raises(ValueError):
        pv.values[0] = 3.0
    new = pv.replace(beta=2.0)
    assert pv["beta"] == 1.0 and new["beta"] == 2.0


def test_fix_marks_parameter_fixed():
    pv = SIRModel().default_params().fix("beta", 1.3)
    assert pv["beta"] == 1.3
    assert pv.estimated_names == ("gamma",)


def test_paramspace_keeps_fixed_columns_verbatim():
    pv = ParamVector.from_dict({"a": 0.1 + 0.2, "b": 2.0}, {"a": POSITIVE, "b": POSITIVE}, estimated=["b"])
    space = ParamSpace(pv)
    nat = np.tile(pv.values, (5, 1))
    back = space.to_natural(space.to_est(nat) + 1.0)
    assert np.all(back[:, 0] == pv.values[0])
    assert np.allclose(back[:, 1], 2.0 * math.e)


def test_timeseries_validation():
    with pytest.raises(DataError):
        TimeSeries([1.0, 1.0], [0, 1])
    with pytest.raises(DataError):
        TimeSeries([1.0, 2.0], [0, -1])
    with pytest.raises(DataError):
        TimeSeries([1.0, 2.0], [0, 1.5])
    with pytest.raises(DataError):
        TimeSeries([0.0, 1.0], [0, 1])
    ts = TimeSeries.weekly([3, np.nan, 4])
    assert list(ts.times) == [1.0, 2.0, 3.0]
    assert list(ts.missing) == [False, True, False]
    assert ts.blank(0).missing[0]


def test_substeps():
    assert substeps(0.0, 1.0, 0.01) == 100
    assert substeps(0.0, 1.0, 0.3) == 4
    assert substeps(0.0, 1e-5, 0.01) == 1


def test_validate_model_passes_for_sir():
    report = validate_model(SIRModel(), SIRModel().default_params(), np.random.default_rng(1))
    assert report.ok, report.violations


class _Leaky(SIRModel):
    def rprocess(self, x, theta, t_start, t_end, rng):
        x = super().rprocess(x, theta, t_start, t_end, rng)
        x[:, 0] = np.maximum(x[:, 0] - 1, 0)
        return x


class _BiasedSampler(SIRModel):
    def rmeasure(self, x, theta, rng):
        return super().rmeasure(x, theta, rng) + 5.0


def test_validate_model_flags_population_leak():
    report = validate_model(_Leaky(), _Leaky().default_params(), np.random.default_rng(1))
    assert any("population" in v for v in report.violations)


def test_validate_model_flags_sampler_mismatch():
    m = _BiasedSampler()
    report = validate_model(m, m.default_params(), np.random.default_rng(1))
    assert any("sampler" in v for v in report.violations)


def test_theta_matrix_checks_parameter_order():
    m = SIRModel()
    pv = ParamVector.from_dict({"gamma": 0.5, "beta": 1.0}, {})
    with pytest.raises(Exception, match="order"):
        m.theta_matrix(pv, 3)


def test_base_model_is_abstract():
    class Bare(PompModel):
        pass

    m = Bare()
    assert not m.has_skeleton
    with pytest.raises(NotImplementedError):
        m.rinit(None, None)


def test_real_scale_identity():
    assert REAL.forward(-3.5) == -3.5 and REAL.inverse(2.0) == 2.0
