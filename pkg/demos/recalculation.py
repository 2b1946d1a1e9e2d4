"""Unplanned recalculation after the prior changes mid-trial.

Starts from the stored optimal design, observes an effect of 0.3 at the
planned interim and recomputes the final sample size under revised priors
with the fixed conditional type-II error rule and with the lambda rule.
"""

import math
from pathlib import Path

from adaptrial import (
    DesignDocument,
    RevisedScenario,
    lagrange_multipliers,
    n_of,
    recalc_fixed_type2,
    recalc_lambda,
    shifted_prior,
)

doc = DesignDocument.load(Path(__file__).resolve().parents[1] / "tests" / "data" / "optimal_design.json")
design, prior = doc.design, doc.prior
z = 0.3 * math.sqrt(design.m)
print(f"planned n(z_m) = {float(n_of(design, z)):.2f} at z_m = {z:.3f}")
lam = lagrange_multipliers(design, prior, z)
print(f"multipliers: lambda_g = {lam.lambda_g:.1f}, lambda_h = {lam.lambda_h:.1f}")

print(f"\n{'mu':>5} {'n fixed-type2':>14} {'n lambda':>9} {'PP lambda':>10}")
for mu in (0.1, 0.2, 0.3, 0.35, 0.4, 0.5, 0.6):
    sc = RevisedScenario(design, prior, shifted_prior(prior, mu), design.m, z)
    a, b = recalc_fixed_type2(sc), recalc_lambda(sc)
    print(f"{mu:5.2f} {a.n_prime:14.2f} {b.n_prime:9.2f} {b.pp_achieved:10.3f}")
