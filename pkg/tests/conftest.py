import math
from pathlib import Path

import pytest

from adaptrial import (
    DesignDocument,
    NaiveRecalcPolicy,
    SingleStageDesign,
    TruncatedNormalPrior,
    naive_adaptive_design,
)
from adaptrial.stats_core import norm_quantile

DATA = Path(__file__).parent / "data"
C_ONE_SIDED = norm_quantile(0.975)


@pytest.fixture(scope="session")
def prior():
    return TruncatedNormalPrior(0.4, 0.2, -0.5, 1.0)


@pytest.fixture(scope="session")
def fixed_design():
    return SingleStageDesign(n=79.0, c=C_ONE_SIDED)


@pytest.fixture(scope="session")
def naive_policy(prior, fixed_design):
    return NaiveRecalcPolicy(beta_cond=0.2, n_min=30.0, n_max=160.0, prior=prior, base=fixed_design, m=26.0)


@pytest.fixture(scope="session")
def naive_design(naive_policy):
    return naive_adaptive_design(naive_policy)


@pytest.fixture(scope="session")
def optimal_doc():
    # produced by `adaptrial design two-stage-optimal` on the reference prior;
    # the acceptance suite re-runs the optimizer and checks it against this file
    return DesignDocument.load(DATA / "optimal_design.json")


@pytest.fixture(scope="session")
def optimal_design(optimal_doc):
    return optimal_doc.design


@pytest.fixture(scope="session")
def z_ref(optimal_design):
    # observed effect 0.3 at the planned interim
    return 0.3 * math.sqrt(optimal_design.m)
