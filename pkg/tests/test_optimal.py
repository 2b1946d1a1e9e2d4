import numpy as np
import pytest

from adaptrial.designs import SingleStageDesign, TwoStageDesign, operating_characteristics
from adaptrial.optimal import (
    OptimizerConfig,
    feasible_seed_design,
    optimize_two_stage,
    predictive_power_profile,
)
from adaptrial.planners import InfeasibleError
from adaptrial.stats_core import TruncatedNormalPrior


@pytest.mark.parametrize("kwargs", [
    dict(alpha=0.0), dict(beta=1.0), dict(pivot_count=2), dict(m_bounds=(10, 5)),
    dict(n_bounds=(5.0, 5.0)), dict(penalty_weight_schedule=(1e4, 1e2)), dict(n_starts=0),
    dict(boundary_bounds=((1.0, 0.0), (0.5, 6.0))),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_config_dict_is_json_ready():
    import json
    d = OptimizerConfig().to_dict()
    assert json.loads(json.dumps(d)) == d


def test_seed_design_is_valid(prior):
    seed = feasible_seed_design(prior, OptimizerConfig())
    assert isinstance(seed, TwoStageDesign)
    assert seed.m == 26 and seed.pivot_count == 7


def test_collapsed_continuation_is_the_single_stage_design(prior):
    # without a continuation region the best design is the fixed one
    res = optimize_two_stage(prior, OptimizerConfig(collapse_continuation=True, m_bounds=(5, 150)))
    assert isinstance(res.design, SingleStageDesign)
    assert res.design.n == 79
    assert res.characteristics.expected_power >= 0.8


def test_infeasible_power_target():
    weak = TruncatedNormalPrior(0.0, 0.1, -0.5, 1.0)
    with pytest.raises(InfeasibleError):
        optimize_two_stage(weak, OptimizerConfig(beta=0.01, m_bounds=(20, 22), n_starts=1))


@pytest.mark.slow
def test_fixed_m_solution_matches_reference(prior, optimal_design):
    # a single interim size with one start reproduces the stored optimum
    res = optimize_two_stage(prior, OptimizerConfig(m_bounds=(35, 35), n_starts=1))
    oc = res.characteristics
    assert res.design.m == 35
    assert 0.0245 <= oc.max_type_one <= 0.0251
    assert 0.799 <= oc.expected_power <= 0.805
    ref = operating_characteristics(optimal_design, prior)
    assert oc.expected_n == pytest.approx(ref.expected_n, abs=0.01)
    assert res.evaluations > 0 and res.m_profile == {35: pytest.approx(oc.expected_n)}


def test_reference_design_constraints(prior, optimal_design, optimal_doc):
    oc = operating_characteristics(optimal_design, prior)
    assert 0.0245 <= oc.max_type_one <= 0.0251
    assert 0.799 <= oc.expected_power <= 0.805
    assert optimal_doc.characteristics["certified"] is True
    assert oc.expected_n == pytest.approx(optimal_doc.characteristics["expected_n"], rel=1e-12)


def test_predictive_power_profile_monotone(prior, optimal_design):
    z, n, pp = predictive_power_profile(optimal_design, prior)
    assert z[0] > optimal_design.f and z[-1] < optimal_design.e
    assert np.all(np.diff(pp) >= -1e-12)
    assert n.shape == pp.shape == z.shape
