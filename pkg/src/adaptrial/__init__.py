"""Planning, monitoring and recalculating adaptive two-stage clinical trials.

Sample sizes are continuous internally; critical values of ``+inf``/``-inf``
encode early stopping for futility/efficacy.
"""

from .designs import (
    OperatingCharacteristics,
    SingleStageDesign,
    TwoStageDesign,
    c_of,
    conditional_error,
    conditional_power_design,
    n_of,
    operating_characteristics,
    predictive_power_design,
    single_stage_as_two_stage,
)
from .documents import DesignDocument, DocumentError
from .optimal import OptimizationResult, OptimizerConfig, optimize_two_stage
from .planners import (
    InfeasibleError,
    NaiveRecalcPolicy,
    RecalcResult,
    naive_adaptive_design,
    naive_recalc_pointwise,
    single_stage_sample_size,
)
from .power import (
    InterimObservation,
    assumed_cp,
    conditional_power,
    expected_power,
    observed_cp,
    posterior,
    predictive_power,
)
from .recalc import (
    LagrangeMultipliers,
    RevisedScenario,
    conditional_error_early,
    conditional_pp_target,
    lagrange_multipliers,
    recalc_fixed_type2,
    recalc_lambda,
    shifted_prior,
)
from .simulation import SimConfig, estimator_sampling_stats, simulate_two_stage
from .stats_core import TruncatedNormalPrior, trunc_normal_pdf

__version__ = "0.1.0"
