import numpy as np
import pytest

from pompfit.core import POSITIVE, ParamVector, PompModel, TimeSeries
from pompfit.models import SIRModel


class TwoStateHMM(PompModel):
    """Two-state hidden Markov chain observed through a 3-symbol emission table.

    Small enough for the exact forward algorithm, used as a likelihood oracle.
    """

    name = "hmm2"
    statenames = ("Z",)
    param_names = ("p01", "p10")

    init = np.array([0.6, 0.4])
    emission = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])

    def default_params(self):
        return ParamVector.from_dict({"p01": 0.2, "p10": 0.3}, {"p01": POSITIVE, "p10": POSITIVE})

    def transition(self, theta):
        p01, p10 = theta
        return np.array([[1 - p01, p01], [p10, 1 - p10]])

    def rinit(self, theta, rng):
        return (rng.random(theta.shape[0]) < self.init[1]).astype(np.int64)[:, None]

    def rprocess(self, x, theta, t_start, t_end, rng):
        z = x[:, 0]
        flip = np.where(z == 0, theta[:, 0], theta[:, 1])
        return np.where(rng.random(len(z)) < flip, 1 - z, z)[:, None]

    def dmeasure(self, y, x, theta):
        if np.isnan(y):
            return np.zeros(x.shape[0])
        return np.log(self.emission[x[:, 0], int(y)])

    def rmeasure(self, x, theta, rng):
        u = rng.random(x.shape[0])
        cdf = np.cumsum(self.emission[x[:, 0]], axis=1)
        return (u[:, None] > cdf).sum(axis=1).astype(float)

    def forward_likelihood(self, data, params):
        """Exact likelihood by the forward algorithm (state moves once per observation)."""
        P = self.transition(params.values)
        alpha = self.init.copy()
        lik = 1.0
        for y in data.values:
            alpha = alpha @ P
            if not np.isnan(y):
                alpha = alpha * self.emission[:, int(y)]
            c = alpha.sum()
            lik *= c
            alpha /= c
        return lik


@pytest.fixture
def hmm():
    return TwoStateHMM()


@pytest.fixture
def hmm_data():
    return TimeSeries.weekly([0, 2, 2, 1, 0, 0, 2, 1, 2, 0])


@pytest.fixture(scope="session")
def sir_model():
    return SIRModel()


@pytest.fixture(scope="session")
def sir_data():
    """Short SIR series simulated at the reference parameters."""
    from pompfit.simulators import simulate_path

    m = SIRModel()
    rng = np.random.default_rng(2018)
    times = np.arange(1.0, 31.0)
    while True:
        states, obs = simulate_path(m, m.default_params(), times, rng=rng)
        if obs.sum() > 1000:
            return TimeSeries(times, obs)


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record, print and assert one acceptance-criterion outcome."""

    def report(number: int, ok: bool, detail: str):
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
