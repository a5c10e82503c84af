import math

import numpy as np
import pytest

from pompfit.core import ModelError, TimeSeries
from pompfit.models import SIRModel, SkeletonModel
from pompfit.pfilter import (
    effective_sample_size,
    naive_mc_loglik,
    particle_filter,
    resample,
    weigh,
)


def test_ess_hand_values():
    assert effective_sample_size(np.ones(500)) == pytest.approx(500)
    assert effective_sample_size([0, 0, 4.0, 0]) == pytest.approx(1)
    assert effective_sample_size([3.0, 1.0]) == pytest.approx(1.6)


def test_systematic_equal_weights_pick_each_once():
    idx = resample(np.ones(7), 7, "systematic", np.random.default_rng(0))
    assert sorted(idx) == list(range(7))


@pytest.mark.parametrize("scheme", ["multinomial", "systematic"])
def test_point_mass(scheme):
    assert np.all(resample([1.0, 0, 0, 0], 50, scheme, np.random.default_rng(1)) == 0)


def test_multinomial_frequencies():
    J = 300_000
    idx = resample([2.0, 1.0], J, "multinomial", np.random.default_rng(2))
    freq = np.mean(idx == 0)
    assert abs(freq - 2 / 3) < 3 * math.sqrt(2 / 9 / J)


def test_systematic_expected_counts():
    w = np.array([0.1, 0.5, 0.15, 0.25])
    counts = np.zeros(4)
    rng = np.random.default_rng(3)
    for _ in range(2000):
        counts += np.bincount(resample(w, 20, "systematic", rng), minlength=4)
    assert np.allclose(counts / 2000, 20 * w, atol=0.05)


def test_resample_rejects_zero_weights():
    with pytest.raises(ValueError):
        resample(np.zeros(3), 3)
    with pytest.raises(ValueError):
        resample(np.ones(3), 3, "stratified")


def test_weigh_failure_and_normalisation():
    cond, w = weigh(np.array([-50.0, -60.0]), 1e-17, 1)
    assert w is None and cond == pytest.approx(math.log(1e-17))
    cond, w = weigh(np.log([0.2, 0.4]), 1e-17, 1)
    assert cond == pytest.approx(math.log(0.3))
    assert w.max() == 1.0
    with pytest.raises(ModelError, match="observation 4"):
        weigh(np.array([0.0, np.nan]), 1e-17, 4)


def test_total_is_sum_of_conditionals(sir_model, sir_data):
    res = particle_filter(sir_model, sir_data, sir_model.default_params(), 200, rng=np.random.default_rng(5))
    assert res.loglik == float(res.cond_loglik.sum())
    assert len(res.ess) == len(sir_data)
    assert np.all((res.ess >= 1) & (res.ess <= 200))


def test_bit_identical_under_seed(sir_model, sir_data):
    a = particle_filter(sir_model, sir_data, sir_model.default_params(), 100, rng=np.random.default_rng(6))
    b = particle_filter(sir_model, sir_data, sir_model.default_params(), 100, rng=np.random.default_rng(6))
    assert a.loglik == b.loglik
    assert np.array_equal(a.cond_loglik, b.cond_loglik)


def test_deterministic_model_has_zero_variance():
    sk = SkeletonModel(SIRModel())
    pv = sk.default_params()
    theta = sk.theta_matrix(pv, 1)
    x, obs, rng = sk.rinit(theta), [], np.random.default_rng(0)
    for n in range(30):
        x = sk.rprocess(x, theta, float(n), n + 1.0)
        obs.append(sk.rmeasure(x, theta, rng)[0])
    sir_data = TimeSeries.weekly(obs)
    lls = [particle_filter(sk, sir_data, pv, J, rng=np.random.default_rng(s)).loglik
           for s, J in [(1, 1), (2, 10), (3, 77)]]
    assert lls[0] == lls[1] == lls[2]
    assert particle_filter(sk, sir_data, pv, 10, rng=np.random.default_rng(4)).nfail == 0
    # equals the sum of observation log-densities along the skeleton trajectory
    x = sk.rinit(theta)
    direct, t = 0.0, 0.0
    for tn, y in zip(sir_data.times, sir_data.values):
        x = sk.rprocess(x, theta, t, tn)
        t = tn
        direct += sk.dmeasure(y, x, theta)[0]
    assert lls[0] == pytest.approx(direct, rel=1e-12, abs=1e-9)
    naive, se = naive_mc_loglik(sk, sir_data, pv, 5, np.random.default_rng(9))
    assert naive == pytest.approx(direct, rel=1e-12, abs=1e-9) and se == 0


def test_hmm_unbiased(hmm, hmm_data):
    exact = hmm.forward_likelihood(hmm_data, hmm.default_params())
    rng = np.random.default_rng(7)
    est = np.exp([particle_filter(hmm, hmm_data, hmm.default_params(), 200, rng=rng).loglik for _ in range(400)])
    assert abs(est.mean() - exact) < 3 * est.std(ddof=1) / math.sqrt(len(est))


def test_naive_unbiased_on_hmm(hmm, hmm_data):
    exact = hmm.forward_likelihood(hmm_data, hmm.default_params())
    rng = np.random.default_rng(8)
    est = np.exp([naive_mc_loglik(hmm, hmm_data, hmm.default_params(), 200, rng)[0] for _ in range(400)])
    assert abs(est.mean() - exact) < 3 * est.std(ddof=1) / math.sqrt(len(est))


class _Impossible(SIRModel):
    """Observation density zero at observation 5 for every particle."""

    def dmeasure(self, y, x, theta):
        out = super().dmeasure(y, x, theta)
        return np.full_like(out, -np.inf) if y == 999 else out


def test_constructed_failure_recorded(sir_data):
    vals = sir_data.values.copy()
    vals[4] = 999
    data = TimeSeries(sir_data.times, vals)
    res = particle_filter(_Impossible(), data, SIRModel().default_params(), 100, tol=1e-17,
                          rng=np.random.default_rng(9))
    assert list(res.fail_indices) == [5]
    assert res.cond_loglik[4] == pytest.approx(math.log(1e-17))


def test_all_failure_run_completes(sir_data):
    m = SIRModel()
    pv = m.default_params().fix("beta", 0.01)
    data = TimeSeries(sir_data.times, np.full(len(sir_data), 500.0))
    res = particle_filter(m, data, pv, 50, rng=np.random.default_rng(10))
    assert res.nfail == len(data)
    assert res.loglik == pytest.approx(len(data) * math.log(1e-17))


def test_missing_observation_contributes_zero(sir_model, sir_data):
    blank = sir_data.blank(7)
    res = particle_filter(sir_model, blank, sir_model.default_params(), 100, rng=np.random.default_rng(11))
    assert res.cond_loglik[7] == 0.0


def test_no_failures_at_truth(sir_model):
    from pompfit.simulators import simulate_path

    fails = 0
    for s in range(10):
        _, obs = simulate_path(sir_model, sir_model.default_params(), np.arange(1.0, 31.0),
                               rng=np.random.default_rng(500 + s))
        res = particle_filter(sir_model, TimeSeries.weekly(obs), sir_model.default_params(), 200,
                              rng=np.random.default_rng(s))
        fails += res.nfail
    assert fails <= 1


def test_variance_non_increasing_in_particles(sir_model, sir_data):
    pv = sir_model.default_params()
    out = {}
    for J in (50, 200, 800):
        ll = np.array([particle_filter(sir_model, sir_data, pv, J, rng=np.random.default_rng(1000 * J + s)).loglik
                       for s in range(100)])
        n = len(ll)
        v = ll.var(ddof=1)
        # SE of the sample variance from the fourth central moment
        se = math.sqrt(max(np.mean((ll - ll.mean()) ** 4) - v**2, 0.0) / n)
        out[J] = (v, se)
    assert out[200][0] <= out[50][0] + out[50][1]
    assert out[800][0] <= out[200][0] + out[200][1]


def test_filter_mean_shape(sir_model, sir_data):
    res = particle_filter(sir_model, sir_data, sir_model.default_params(), 50, rng=np.random.default_rng(12),
                          filter_mean=True)
    assert res.filter_mean.shape == (len(sir_data), 4)
    assert np.allclose(res.filter_mean[:, :3].sum(axis=1), 10000)


def test_naive_all_zero_warns():
    m = SIRModel()
    data = TimeSeries.weekly([5.0, 5.0])
    with pytest.warns(RuntimeWarning):
        est, se = naive_mc_loglik(m, data, m.default_params().fix("beta", 0.0), 10, np.random.default_rng(13))
    assert est == -np.inf and math.isnan(se)


def test_backends_agree_in_distribution(sir_data):
    pv = SIRModel().default_params()
    a = np.array([particle_filter(SIRModel(backend="numba"), sir_data, pv, 200, rng=np.random.default_rng(s)).loglik
                  for s in range(30)])
    b = np.array([particle_filter(SIRModel(backend="numpy"), sir_data, pv, 200, rng=np.random.default_rng(s)).loglik
                  for s in range(30)])
    se = math.sqrt(a.var(ddof=1) / 30 + b.var(ddof=1) / 30)
    assert abs(a.mean() - b.mean()) < 4 * se
