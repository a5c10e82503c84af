"""Hot inner loops for the reference models, compiled with numba.

Every kernel loops over particles and reseeds numba's generator from a
per-particle seed before simulating that particle, so the result does not
depend on how particles are scheduled across threads. The pure-numpy
counterpart of the tau-leap kernels is the generic reaction engine in
:mod:`pompfit.simulators`; the two are equal in distribution, not bitwise.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range

TWO_PI = 2.0 * math.pi

# numba's binomial sampler costs time proportional to n * p; above this mean
# the draw is first reduced through beta-distributed order statistics.
BINOM_DIRECT = 30.0


def _binomial(n, p):
    """Exact Binomial(n, p) draw in O(log(n p)) beta draws.

    The a-th smallest of n uniforms is Beta(a, n - a + 1). Comparing it with
    ``p`` splits the count into a known part and a smaller binomial, which is
    repeated until the mean is small enough for the direct sampler.
    """
    acc = 0
    sgn = 1
    while True:
        if n <= 0 or p <= 0.0:
            return acc
        if p >= 1.0:
            return acc + sgn * n
        if p > 0.5:
            acc += sgn * n
            sgn = -sgn
            p = 1.0 - p
        if n * p <= BINOM_DIRECT:
            return acc + sgn * np.random.binomial(n, p)
        a = int(n * p)
        u = np.random.beta(a, n - a + 1)
        if u < p:
            acc += sgn * a
            n = n - a
            p = (p - u) / (1.0 - u)
        else:
            n = a - 1
            p = p / u


_binomial_nb = njit(_binomial)


def _sir_tauleap(x, beta, gamma, N, dt, nsteps, seeds):
    J = x.shape[0]
    for j in prange(J):
        np.random.seed(seeds[j])
        S = x[j, 0]
        I = x[j, 1]
        R = x[j, 2]
        H = 0
        p_rec = 1.0 - math.exp(-gamma[j] * dt)
        for _ in range(nsteps):
            if I == 0:
                break
            d_si = 0
            if S > 0:
                d_si = _binomial_nb(S, 1.0 - math.exp(-beta[j] * I / N[j] * dt))
            d_ir = _binomial_nb(I, p_rec)
            S -= d_si
            I += d_si - d_ir
            R += d_ir
            H += d_si
        x[j, 0] = S
        x[j, 1] = I
        x[j, 2] = R
        x[j, 3] = H
    return x


def _exits2(n, r1, r2, dt):
    """Euler-multinomial exits for a compartment with two routes."""
    total = r1 + r2
    if n == 0 or total <= 0.0:
        return 0, 0
    leave = _binomial_nb(n, 1.0 - math.exp(-total * dt))
    if leave == 0:
        return 0, 0
    k1 = _binomial_nb(leave, min(1.0, r1 / total))
    return k1, leave - k1


_exits2_nb = njit(_exits2)


def _sirs_tauleap(x, beta, rho, phi, w, sigma2, gamma, omega, mu, N, t0, dt, nsteps, seeds):
    J = x.shape[0]
    for j in prange(J):
        np.random.seed(seeds[j])
        S = x[j, 0]
        I = x[j, 1]
        R = x[j, 2]
        H = 0
        s2 = sigma2[j]
        for k in range(nsteps):
            t = t0 + k * dt
            xi = 1.0
            if s2 > 0.0:
                xi = np.random.gamma(dt / s2, s2) / dt
            bt = beta[j] * (1.0 + rho[j] * math.cos(TWO_PI * t / w[j] + phi[j])) * xi
            # births replace deaths one for one so S + I + R stays at N
            d_si, d_sd = _exits2_nb(S, bt * I / N[j], mu[j], dt)
            d_ir, d_id = _exits2_nb(I, gamma[j], mu[j], dt)
            d_rs, d_rd = _exits2_nb(R, omega[j], mu[j], dt)
            births = d_sd + d_id + d_rd
            S += births - d_si - d_sd + d_rs
            I += d_si - d_ir - d_id
            R += d_ir - d_rs - d_rd
            H += d_si
        x[j, 0] = S
        x[j, 1] = I
        x[j, 2] = R
        x[j, 3] = H
    return x


def _sir_gillespie(x, beta, gamma, N, t_start, t_end, seeds):
    """Exact SIR jump process from ``t_start`` to ``t_end`` for each row of ``x``."""
    J = x.shape[0]
    for j in prange(J):
        np.random.seed(seeds[j])
        S = x[j, 0]
        I = x[j, 1]
        R = x[j, 2]
        H = 0
        t = t_start
        while I > 0:
            r_inf = beta[j] * I * S / N[j]
            r_rec = gamma[j] * I
            total = r_inf + r_rec
            t += np.random.exponential(1.0 / total)
            if t > t_end:
                break
            if np.random.random() * total < r_inf:
                S -= 1
                I += 1
                H += 1
            else:
                I -= 1
                R += 1
        x[j, 0] = S
        x[j, 1] = I
        x[j, 2] = R
        x[j, 3] = H
    return x


if HAVE_NUMBA:
    import numba

    sir_tauleap = njit(_sir_tauleap)
    sir_tauleap_parallel = numba.njit(parallel=True, cache=True)(_sir_tauleap)
    sirs_tauleap = njit(_sirs_tauleap)
    sirs_tauleap_parallel = numba.njit(parallel=True, cache=True)(_sirs_tauleap)
    sir_gillespie = njit(_sir_gillespie)
else:  # pragma: no cover
    sir_tauleap = sir_tauleap_parallel = _sir_tauleap
    sirs_tauleap = sirs_tauleap_parallel = _sirs_tauleap
    sir_gillespie = _sir_gillespie


def particle_seeds(rng, J):
    """Per-particle 32-bit seeds for one call of a kernel."""
    return rng.integers(0, 2**32, size=J, dtype=np.uint64).astype(np.uint32)
