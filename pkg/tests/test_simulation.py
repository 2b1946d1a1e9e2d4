import math

import numpy as np
import pytest
from scipy import integrate, stats

from adaptrial import power
from adaptrial.designs import operating_characteristics, single_stage_as_two_stage
from adaptrial.simulation import SimConfig, estimator_sampling_stats, sample_prior, simulate_two_stage


@pytest.mark.parametrize("kwargs", [
    dict(replicates=0, seed=1, theta=0.0),
    dict(replicates=10, seed=-1, theta=0.0),
    dict(replicates=10, seed=1),
    dict(replicates=10, seed=1, theta=0.0, workers=0),
])
def test_config_validation(prior, kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)
    with pytest.raises(ValueError):
        SimConfig(10, 1, theta=0.0, prior=prior)


def test_chunks_cover_replicates():
    cfg = SimConfig(2_500_001, 3, theta=0.0)
    sizes = [s for s, _ in cfg.chunks()]
    assert sum(sizes) == 2_500_001 and sizes[-1] == 2_500_001 - 2 * (1 << 20)


def test_sample_prior_against_scipy(prior):
    rng = np.random.Generator(np.random.Philox(5))
    x = sample_prior(prior, 200_000, rng)
    assert x.min() >= prior.lower and x.max() <= prior.upper
    ref = stats.truncnorm((prior.lower - prior.mu) / prior.sigma, (prior.upper - prior.mu) / prior.sigma,
                          loc=prior.mu, scale=prior.sigma)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_sample_prior_far_upper_tail():
    # a window far above the mean still lands inside it
    from adaptrial import TruncatedNormalPrior
    tail = TruncatedNormalPrior(0.0, 0.1, 0.9, 1.0)
    x = sample_prior(tail, 10_000, np.random.Generator(np.random.Philox(1)))
    assert np.all((x >= 0.9) & (x <= 1.0))


def test_reproducible_and_worker_invariant(optimal_design, prior):
    a = simulate_two_stage(optimal_design, SimConfig(300_000, 42, prior=prior, chunk_size=1 << 16))
    b = simulate_two_stage(optimal_design, SimConfig(300_000, 42, prior=prior, chunk_size=1 << 16, workers=3))
    assert a == b
    c = simulate_two_stage(optimal_design, SimConfig(300_000, 43, prior=prior, chunk_size=1 << 16))
    assert c.expected_n != a.expected_n


def test_fixed_design_type_one(fixed_design):
    embedded = single_stage_as_two_stage(fixed_design, 39.0)
    oc = simulate_two_stage(embedded, SimConfig(2_000_000, 7, theta=0.0))
    se = oc.standard_errors["max_type_one"]
    assert abs(oc.max_type_one - 0.025) <= 3 * se
    assert oc.expected_n == pytest.approx(79.0, abs=1e-4)


def test_modes_leave_unestimable_fields_nan(optimal_design, prior):
    at_alt = simulate_two_stage(optimal_design, SimConfig(10_000, 1, theta=0.4))
    assert math.isnan(at_alt.max_type_one) and not math.isnan(at_alt.expected_power)
    bayes = simulate_two_stage(optimal_design, SimConfig(10_000, 1, prior=prior))
    assert math.isnan(bayes.max_type_one)


def test_prior_mode_against_quadrature(optimal_design, prior):
    ref = operating_characteristics(optimal_design, prior)
    oc = simulate_two_stage(optimal_design, SimConfig(2_000_000, 9, prior=prior))
    se = oc.standard_errors
    assert abs(oc.expected_n - ref.expected_n) <= 3 * se["expected_n"]
    assert abs(oc.expected_power - ref.expected_power) <= 3 * se["expected_power"]
    assert abs(oc.sd_n - ref.sd_n) <= 3 * se["sd_n"]


def test_integer_mode_against_quadrature(optimal_design, prior):
    ref = operating_characteristics(optimal_design, prior, integer_n=True)
    oc = simulate_two_stage(optimal_design, SimConfig(1_000_000, 4, prior=prior), integer_n=True)
    assert abs(oc.expected_n - ref.expected_n) <= 3 * oc.standard_errors["expected_n"]


def _quad_moment(fn, theta, m):
    sm = math.sqrt(m)
    return integrate.quad(lambda z: stats.norm.pdf(z - sm * theta) * fn(z), sm * theta - 9, sm * theta + 9,
                          epsabs=1e-12, limit=200)[0]


@pytest.mark.parametrize("theta", [0.1, 0.4])
def test_estimator_stats_against_quadrature(prior, theta):
    m, n, c = 26, 79, 1.96
    res = estimator_sampling_stats(theta, m, n, c, prior, 0.4, SimConfig(200_000, 2, theta=theta))

    def truth(z):
        return power.conditional_power(m, n, z, c, theta)

    est = {
        "acp": lambda z: power.conditional_power(m, n, z, c, 0.4),
        "ocp": lambda z: power.conditional_power(m, n, z, c, z / math.sqrt(m)),
        "pp": lambda z: float(power.predictive_power_vec(prior, m, z, n, c)),
    }
    for k, fn in est.items():
        bias = _quad_moment(lambda z: fn(z) - truth(z), theta, m)
        mse = _quad_moment(lambda z: (fn(z) - truth(z)) ** 2, theta, m)
        mean = _quad_moment(fn, theta, m)
        sd = math.sqrt(max(_quad_moment(lambda z: fn(z) ** 2, theta, m) - mean**2, 0.0))
        s = res[k]
        assert abs(s.bias - bias) <= 4 * s.se_bias + 1e-12
        assert abs(s.mse - mse) <= 4 * s.se_mse + 1e-12
        assert s.sd == pytest.approx(sd, abs=5e-3)
        assert s.error_sd == pytest.approx(math.sqrt(max(mse - bias**2, 0.0)), abs=5e-3)


def test_estimators_at_the_planning_alternative(prior):
    res = estimator_sampling_stats(0.4, 26, 79, 1.96, prior, 0.4, SimConfig(200_000, 3, theta=0.4))
    # ACP is exact when the assumed effect is the true one
    assert res["acp"].bias == 0.0 and res["acp"].mse == 0.0
    assert res["pp"].mse < res["ocp"].mse
    assert all(isinstance(v, float) for v in res["ocp"].as_dict().values())


def test_ocp_piles_up_near_zero_for_small_effects(prior):
    # mass concentrated at low conditional power with a long upper tail
    res = estimator_sampling_stats(0.05, 26, 79, 1.96, prior, 0.4, SimConfig(200_000, 8, theta=0.05))
    assert res["ocp"].skewness > max(res["pp"].skewness, res["acp"].skewness) + 0.5


def test_estimator_domain(prior):
    with pytest.raises(ValueError):
        estimator_sampling_stats(0.4, 79, 79, 1.96, prior, 0.4, SimConfig(10, 1, theta=0.4))
