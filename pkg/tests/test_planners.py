import math

import numpy as np
import pytest

from adaptrial import power
from adaptrial.designs import SingleStageDesign, TwoStageDesign, c_of, conditional_error, n_of, operating_characteristics
from adaptrial.planners import (
    InfeasibleError,
    NaiveRecalcPolicy,
    conditional_critical_value,
    naive_futility_boundary,
    naive_recalc_pointwise,
    single_stage_sample_size,
    standardized_threshold,
)
from adaptrial.stats_core import TruncatedNormalPrior


def test_single_stage_reference(prior):
    design = single_stage_sample_size(prior, 0.025, 0.8)
    assert design.n == 79
    assert design.c == pytest.approx(1.959963984540054, abs=1e-12)


@pytest.mark.parametrize("alpha,target", [(0.025, 0.8), (0.05, 0.9), (0.01, 0.7)])
def test_single_stage_against_linear_scan(prior, alpha, target):
    design = single_stage_sample_size(prior, alpha, target)
    ns = np.arange(1, 400)
    ep = power.expected_power(prior, ns.astype(float), design.c)
    assert design.n == ns[np.argmax(ep >= target)]


def test_single_stage_infeasible():
    # most prior mass near zero: 99% expected power is out of reach
    weak = TruncatedNormalPrior(0.0, 0.1, -0.5, 1.0)
    with pytest.raises(InfeasibleError):
        single_stage_sample_size(weak, 0.025, 0.99, n_cap=1000)
    with pytest.raises(ValueError):
        single_stage_sample_size(weak, 1.5, 0.8)


def test_threshold_round_trip():
    z = np.linspace(-1, 3, 9)
    q = standardized_threshold(26, 79, z, 1.96)
    np.testing.assert_allclose(conditional_critical_value(26, 79, z, q), 1.96, rtol=1e-12)
    # the conditional error does not depend on n' once q is fixed
    for n_prime in (40.0, 100.0, 300.0):
        c_prime = conditional_critical_value(26, n_prime, z, q)
        np.testing.assert_allclose(
            power.conditional_power(26, n_prime, z, c_prime, 0.0),
            power.conditional_power(26, 79, z, 1.96, 0.0),
            rtol=1e-10,
        )


def test_policy_validation(prior, fixed_design):
    with pytest.raises(ValueError):
        NaiveRecalcPolicy(1.2, 30, 160, prior, fixed_design, 26)
    with pytest.raises(ValueError):
        NaiveRecalcPolicy(0.2, 20, 160, prior, fixed_design, 26)
    with pytest.raises(ValueError):
        NaiveRecalcPolicy(0.2, 90, 160, prior, SingleStageDesign(25, 1.96), 26)


def _grid_oracle(policy, z, step=0.01):
    # smallest n' on a fine grid whose predictive power reaches the target
    q = standardized_threshold(policy.m, policy.base.n, z, policy.base.c)
    grid = np.arange(policy.n_min, policy.n_max + step / 2, step)
    pp = power.predictive_power_vec(policy.prior, policy.m, z, grid, conditional_critical_value(policy.m, grid, z, q))
    ok = pp >= policy.pp_target
    return grid[np.argmax(ok)] if ok.any() else None


@pytest.mark.parametrize("z", [0.9, 1.2, 1.8, 2.5, 3.5])
def test_naive_pointwise_against_grid(naive_policy, z):
    res = naive_recalc_pointwise(naive_policy, z)
    ref = _grid_oracle(naive_policy, z)
    assert not res.stopped_for_futility
    assert ref - 0.01 - 1e-9 <= res.n_prime <= ref + 1e-9
    assert res.pp_achieved == pytest.approx(naive_policy.pp_target, abs=1e-8) or res.n_prime == naive_policy.n_min
    # the new critical value spends exactly the old conditional error
    cp0 = power.conditional_power(naive_policy.m, res.n_prime, z, res.c_prime, 0.0)
    assert cp0 == pytest.approx(res.conditional_error_budget, rel=1e-9)


def test_naive_futility(naive_policy):
    f = naive_futility_boundary(naive_policy)
    assert _grid_oracle(naive_policy, f - 0.01) is None
    above = naive_recalc_pointwise(naive_policy, f + 0.01)
    assert not above.stopped_for_futility
    below = naive_recalc_pointwise(naive_policy, f - 0.01)
    assert below.stopped_for_futility
    assert below.n_prime == naive_policy.m and below.c_prime == math.inf
    assert below.pp_at_cap < naive_policy.pp_target


def test_naive_design_tracks_pointwise_rule(naive_policy, naive_design):
    assert isinstance(naive_design, TwoStageDesign)
    assert naive_design.f == pytest.approx(naive_futility_boundary(naive_policy), abs=1e-6)
    z = np.linspace(naive_design.f + 0.01, 4.0, 37)
    ref = [naive_recalc_pointwise(naive_policy, zi) for zi in z]
    np.testing.assert_allclose(n_of(naive_design, z), [r.n_prime for r in ref], atol=0.5)
    np.testing.assert_allclose(c_of(naive_design, z), [r.c_prime for r in ref], atol=1e-3)


def test_naive_design_respects_conditional_error(naive_policy, naive_design):
    # spending the base design's conditional error pointwise can only lower
    # the overall type-I error (futility stops spend less)
    z = np.linspace(naive_design.f + 1e-6, naive_design.e - 1e-6, 101)
    ce = conditional_error(naive_design, z)
    base = power.conditional_power(26, 79, z, naive_policy.base.c, 0.0)
    np.testing.assert_allclose(ce, base, atol=2e-4)
    oc = operating_characteristics(naive_design, naive_policy.prior)
    assert oc.max_type_one <= 0.025
