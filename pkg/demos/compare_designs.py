"""Single-stage, naive adaptive and optimal two-stage designs side by side.

The optimal design is loaded from the stored reference document; pass
``--optimize`` to recompute it (a couple of minutes).
"""

import sys
from pathlib import Path

from adaptrial import (
    DesignDocument,
    NaiveRecalcPolicy,
    OptimizerConfig,
    TruncatedNormalPrior,
    naive_adaptive_design,
    operating_characteristics,
    optimize_two_stage,
    single_stage_sample_size,
)

prior = TruncatedNormalPrior(0.4, 0.2, -0.5, 1.0)
fixed = single_stage_sample_size(prior, 0.025, 0.8)
naive = naive_adaptive_design(NaiveRecalcPolicy(0.2, 30.0, 160.0, prior, fixed, 26.0))

if "--optimize" in sys.argv:
    optimal = optimize_two_stage(prior, OptimizerConfig()).design
else:
    ref = Path(__file__).resolve().parents[1] / "tests" / "data" / "optimal_design.json"
    optimal = DesignDocument.load(ref).design

print(f"{'design':>10} {'E[n]':>7} {'SD[n]':>7} {'EP':>7} {'type-I':>7}")
for name, d in (("fixed", fixed), ("naive", naive), ("optimal", optimal)):
    oc = operating_characteristics(d, prior)
    print(f"{name:>10} {oc.expected_n:7.2f} {oc.sd_n:7.2f} {oc.expected_power:7.4f} {oc.max_type_one:7.4f}")

print(f"\noptimal design: m={optimal.m:g}, continue for {optimal.f:.3f} < z_m < {optimal.e:.3f}")
