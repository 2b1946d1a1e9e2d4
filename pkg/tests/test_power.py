import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from adaptrial import power
from adaptrial.power import InterimObservation
from adaptrial.stats_core import TruncatedNormalPrior, trunc_normal_pdf


def cp_oracle(m, n, z, c, theta):
    # final statistic as a sum of the two stages: sqrt(n) Z_n = sqrt(m) z + S_2
    s2 = stats.norm((n - m) * theta, math.sqrt(n - m))
    return s2.sf(c * math.sqrt(n) - math.sqrt(m) * z)


@pytest.mark.parametrize("m,n,z,c,theta", [
    (26, 79, 1.0, 1.96, 0.4),
    (26, 79, -0.5, 1.96, 0.0),
    (35, 100, 2.0, 2.1, 0.25),
    (10, 11, 0.3, 0.5, -0.2),
])
def test_conditional_power_against_stagewise_oracle(m, n, z, c, theta):
    assert power.conditional_power(m, n, z, c, theta) == pytest.approx(cp_oracle(m, n, z, c, theta), rel=1e-12)


def test_conditional_power_infinite_critical_values():
    assert power.conditional_power(26, 79, 1.0, np.inf, 0.4) == 0.0
    assert power.conditional_power(26, 79, 1.0, -np.inf, 0.4) == 1.0


@pytest.mark.parametrize("m,n", [(0, 10), (10, 10), (12, 10), (-1, 5)])
def test_conditional_power_domain(m, n):
    with pytest.raises(ValueError):
        power.conditional_power(m, n, 0.0, 1.96, 0.0)


def test_conditional_power_broadcasts():
    z = np.linspace(-1, 3, 5)
    out = power.conditional_power(26, 79, z, 1.96, np.array([[0.0], [0.4]]))
    assert out.shape == (2, 5)
    assert np.all(np.diff(out, axis=1) > 0)


@settings(max_examples=100, deadline=None)
@given(
    z=st.floats(-4, 4), dz=st.floats(1e-3, 2),
    theta=st.floats(-0.5, 1), dtheta=st.floats(1e-3, 1),
    c=st.floats(0, 3), m=st.integers(5, 60), extra=st.integers(1, 150),
)
def test_conditional_power_monotone(z, dz, theta, dtheta, c, m, extra):
    n = m + extra
    base = power.conditional_power(m, n, z, c, theta)
    assert power.conditional_power(m, n, z + dz, c, theta) >= base
    assert power.conditional_power(m, n, z, c, theta + dtheta) >= base
    assert power.conditional_power(m, n, z, c + 0.1, theta) <= base


def test_acp_equals_ocp_at_point_alternative():
    obs = InterimObservation(26, math.sqrt(26) * 0.4)
    assert power.assumed_cp(obs, 79, 1.96, 0.4) == power.observed_cp(obs, 79, 1.96)
    with pytest.raises(ValueError):
        power.assumed_cp(obs, 79, 1.96, 0.0)


def test_interim_observation_validation():
    with pytest.raises(ValueError):
        InterimObservation(0.5, 1.0)
    with pytest.raises(ValueError):
        InterimObservation(10, float("inf"))
    assert InterimObservation(25, 2.0).theta_hat == pytest.approx(0.4)


def _numeric_posterior(prior, m, z, positive):
    lo = max(prior.lower, 0.0) if positive else prior.lower
    like = lambda t: trunc_normal_pdf(prior, t) * stats.norm.pdf(z - math.sqrt(m) * t)
    mass = integrate.quad(like, lo, prior.upper, epsabs=1e-14)[0]
    return lo, like, mass


@pytest.mark.parametrize("z", [-1.0, 0.5, 2.0, 4.0])
def test_posterior_against_numeric_bayes(prior, z):
    m = 26
    post = power.posterior(prior, InterimObservation(m, z))
    lo, like, mass = _numeric_posterior(prior, m, z, positive=False)
    for t in (-0.2, 0.1, 0.4, 0.8):
        assert trunc_normal_pdf(post, t) == pytest.approx(like(t) / mass, rel=1e-9)


@pytest.mark.parametrize("z,n,c", [(-0.5, 79, 1.96), (1.0, 79, 1.96), (2.5, 60, 2.1), (1.5, 200, 1.5)])
def test_predictive_power_against_quad(prior, z, n, c):
    m = 26
    lo, like, mass = _numeric_posterior(prior, m, z, positive=True)
    ref = integrate.quad(lambda t: like(t) * power.conditional_power(m, n, z, c, t), lo, prior.upper, epsabs=1e-14)[0] / mass
    got = power.predictive_power(prior, InterimObservation(m, z), n, c)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_predictive_power_vectorised_matches_scalar(prior):
    z = np.array([-1.0, 0.0, 1.0, 2.0])
    vec = power.predictive_power_vec(prior, 26, z, 79, 1.96)
    for zi, vi in zip(z, vec):
        assert vi == pytest.approx(power.predictive_power(prior, InterimObservation(26, zi), 79, 1.96), rel=1e-14)


@pytest.mark.parametrize("n", [10, 50, 79, 300])
def test_expected_power_against_quad(prior, n):
    c = 1.959963984540054
    mass = integrate.quad(lambda t: trunc_normal_pdf(prior, t), 0, prior.upper)[0]
    ref = integrate.quad(lambda t: trunc_normal_pdf(prior, t) * stats.norm.sf(c - math.sqrt(n) * t), 0, prior.upper)[0] / mass
    assert power.expected_power(prior, n, c) == pytest.approx(ref, rel=1e-10)


def test_expected_power_single_stage_reference(prior):
    # 79 subjects are the first to reach 80% expected power
    c = 1.959963984540054
    assert power.expected_power(prior, 79, c) == pytest.approx(0.800687, abs=1e-6)
    assert power.expected_power(prior, 78, c) < 0.8


@pytest.mark.parametrize("z", [-2.0, 0.0, 2.0, 5.0])
def test_marginal_density_against_quad(prior, z):
    m = 35
    ref = integrate.quad(lambda t: trunc_normal_pdf(prior, t) * stats.norm.pdf(z - math.sqrt(m) * t), prior.lower, prior.upper)[0]
    assert power.marginal_zm_density(prior, m, z) == pytest.approx(ref, rel=1e-10)


def test_marginal_density_untruncated_closed_form():
    # bounds far away: the prior predictive is N(sqrt(m) mu, 1 + m sigma^2)
    wide = TruncatedNormalPrior(0.4, 0.2, -50.0, 50.0)
    m = 35
    z = np.linspace(-2, 6, 9)
    ref = stats.norm.pdf(z, math.sqrt(m) * 0.4, math.sqrt(1 + m * 0.04))
    np.testing.assert_allclose(power.marginal_zm_density(wide, m, z), ref, rtol=1e-9)


def test_predictive_power_degenerates_to_acp():
    # a near-point prior leaves no room for learning
    point = TruncatedNormalPrior(0.4, 1e-4, -0.5, 1.0)
    z = np.linspace(-1, 3, 9)
    pp = power.predictive_power_vec(point, 26, z, 79, 1.96)
    acp = power.conditional_power(26, 79, z, 1.96, 0.4)
    assert np.max(np.abs(pp - acp)) < 1e-3


def test_rejection_probability():
    assert power.rejection_probability(79, 1.96, 0.0) == pytest.approx(stats.norm.sf(1.96))
    with pytest.raises(ValueError):
        power.rejection_probability(0, 1.96, 0.0)
