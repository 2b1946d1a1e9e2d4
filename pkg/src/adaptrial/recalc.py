"""Recalculating an optimal two-stage design after the prior has been revised.

Both schemes keep the conditional type-I error of the original design (the
conditional error principle) and differ in how they treat predictive power:

* :func:`recalc_fixed_type2` demands at least the predictive power the
  original design would have had, now evaluated under the revised prior;
* :func:`recalc_lambda` keeps the original trade-off between sample size and
  predictive power (the Lagrange multiplier of that constraint) fixed and
  lets the predictive-power level move.

Interim looks may happen before (``m' < m``) or after (``m' > m``) the planned
time point; the design's interim decision is then integrated out using the
conditional law of ``Z_m`` given ``Z_m'``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from . import power
from .designs import (
    TwoStageDesign,
    c_of,
    conditional_error,
    n_of,
    predictive_power_design,
)
from .planners import (
    RecalcResult,
    conditional_critical_value,
    single_stage_sample_size,
    standardized_threshold,
)
from .stats_core import TruncatedNormalPrior, find_root_monotone, gl_nodes, norm_pdf, norm_quantile, norm_sf

FD_REL_STEP_N = 1e-3
FD_STEP_C = 1e-5
MAX_CONDITION = 1e12
SUPPORT_WIDTH = 12.0


class SingularSystemError(ValueError):
    """The gradient matrix of the two constraints is numerically singular."""


def shifted_prior(prior: TruncatedNormalPrior, mu: float) -> TruncatedNormalPrior:
    """Same scale and bounds as ``prior`` with the location moved to ``mu``."""
    return replace(prior, mu=float(mu))


def default_n_cap(prior: TruncatedNormalPrior, alpha: float = 0.025, ep_target: float = 0.8) -> float:
    """Four times the single-stage sample size for ``prior``."""
    return 4.0 * single_stage_sample_size(prior, alpha, ep_target).n


def _min_continuation_n(design: TwoStageDesign, points: int = 2001) -> float:
    z = np.linspace(design.f, design.e, points)[1:-1]
    return float(min(np.min(n_of(design, z)), np.min(design.n_pivots)))


@dataclass(frozen=True)
class RevisedScenario:
    """An interim look at ``m_prime`` under a revised prior.

    ``n_cap`` bounds the recalculated sample size; ``None`` means four times
    the single-stage sample size under the original prior.
    """

    original_design: TwoStageDesign
    original_prior: TruncatedNormalPrior
    revised_prior: TruncatedNormalPrior
    m_prime: float
    z_m_prime: float
    n_cap: float | None = None

    def __post_init__(self):
        if not self.m_prime >= 1:
            raise ValueError(f"m_prime must be >= 1, got {self.m_prime}")
        if not math.isfinite(self.z_m_prime):
            raise ValueError("z_m_prime must be finite")
        if self.original_prior.upper <= 0 or self.revised_prior.upper <= 0:
            raise ValueError("priors need mass on positive effects")
        if self.m_prime > self.original_design.m:
            n_min = _min_continuation_n(self.original_design)
            if not self.m_prime < n_min:
                raise ValueError(
                    f"late interim at m'={self.m_prime} must precede every final "
                    f"analysis (smallest n on the continuation region is {n_min:.4g})"
                )
        if self.n_cap is not None and not self.n_cap > self.m_prime:
            raise ValueError("n_cap must exceed m_prime")

    @property
    def at_planned_time(self) -> bool:
        return self.m_prime == self.original_design.m

    def cap(self) -> float:
        return float(self.n_cap) if self.n_cap is not None else default_n_cap(self.original_prior)


@dataclass(frozen=True)
class LagrangeMultipliers:
    """Multipliers of the type-I and predictive-power constraints.

    Sign convention: ``grad n + lambda_g * grad g + lambda_h * grad h = 0``
    with ``g = CP_0 - budget <= 0`` and ``h = PP_target - PP <= 0``, so both
    multipliers are nonnegative at a regular optimum.
    """

    lambda_g: float
    lambda_h: float
    residual: float = 0.0


def _interim_law(design: TwoStageDesign, m_prime: float, z_prime: float, theta):
    """Mean and sd of ``Z_m`` given ``Z_m' = z_prime``.

    Looking back from a later look the law does not depend on the effect
    (the partial sums form a Brownian bridge).
    """
    m = design.m
    theta = np.asarray(theta, dtype=float)
    if m_prime < m:
        mean = math.sqrt(m) * theta + math.sqrt(m_prime / m) * (z_prime - math.sqrt(m_prime) * theta)
        sd = math.sqrt(1.0 - m_prime / m)
    else:
        mean = np.full(theta.shape, math.sqrt(m / m_prime) * z_prime)
        sd = math.sqrt(1.0 - m / m_prime)
    return mean, sd


def _rejection_given_look(design: TwoStageDesign, m_prime: float, z_prime: float, theta, order=None):
    """Pr_theta[design rejects | Z_m' = z_prime], broadcasting over ``theta``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    m, f, e = design.m, design.f, design.e
    mean, sd = _interim_law(design, m_prime, z_prime, theta)
    efficacy = norm_sf((e - mean) / sd)
    lo = np.clip(mean - SUPPORT_WIDTH * sd, f, e)
    hi = np.clip(mean + SUPPORT_WIDTH * sd, f, e)
    nodes, w = gl_nodes(lo, hi, order)
    dens = norm_pdf((nodes - mean[:, None]) / sd) / sd
    n = n_of(design, nodes)
    c = c_of(design, nodes)
    if m_prime < m:
        cp = power.conditional_power(m, n, nodes, c, theta[:, None])
    else:
        cp = power.conditional_power(m_prime, n, z_prime, c, theta[:, None])
    return efficacy + np.sum(w * dens * cp, axis=-1)


def conditional_error_early(design: TwoStageDesign, m_prime: float, z_m_prime: float) -> float:
    """Conditional type-I error of ``design`` given an earlier look at ``m_prime``.

    Averages the design's conditional error over the law of ``Z_m`` given
    ``Z_m' = z_m_prime`` under the null; stopping regions contribute 0 or 1.
    """
    if not 0 < m_prime < design.m:
        raise ValueError(
            f"need 0 < m_prime < m={design.m}, got {m_prime}; use conditional_error at the planned look"
        )
    return float(_rejection_given_look(design, m_prime, float(z_m_prime), 0.0)[0])


def conditional_error_late(design: TwoStageDesign, m_prime: float, z_m_prime: float) -> float:
    """Conditional type-I error when the look happens after the planned ``m``.

    The skipped interim decision is integrated out; ``m_prime`` must precede
    every final analysis of the continuation region.
    """
    if not design.m < m_prime < _min_continuation_n(design):
        raise ValueError("late look must fall between m and the smallest final sample size")
    return float(_rejection_given_look(design, m_prime, float(z_m_prime), 0.0)[0])


def _budget(design: TwoStageDesign, m_prime: float, z_prime: float) -> float:
    if m_prime == design.m:
        return float(conditional_error(design, z_prime))
    if m_prime < design.m:
        return conditional_error_early(design, m_prime, z_prime)
    return conditional_error_late(design, m_prime, z_prime)


def conditional_pp_target(
    design: TwoStageDesign,
    prior_phi: TruncatedNormalPrior,
    m_prime: float,
    z_m_prime: float,
) -> float:
    """Predictive power the original design retains given the look at ``m_prime``.

    Posterior of ``prior_phi`` given ``z_m_prime`` (restricted to positive
    effects) averaged against the design's rejection probability given that
    look. At the planned time this is the design's own predictive power.
    """
    if not m_prime > 0:
        raise ValueError("m_prime must be positive")
    if prior_phi.upper <= 0:
        raise ValueError("prior has no mass on positive effects")
    if m_prime == design.m:
        return float(predictive_power_design(design, prior_phi, z_m_prime))
    if m_prime > design.m and not m_prime < _min_continuation_n(design):
        raise ValueError("late look must fall between m and the smallest final sample size")
    nodes, weights = power.posterior_positive_nodes(prior_phi, m_prime, z_m_prime)
    return float(np.sum(weights * _rejection_given_look(design, m_prime, float(z_m_prime), nodes)))


def _threshold(design: TwoStageDesign, m_prime: float, z_prime: float, budget: float) -> float:
    """Standardised conditional threshold that exhausts ``budget``."""
    if m_prime == design.m and design.in_continuation(z_prime):
        # exact for the original (n, c) so invariance does not hinge on a quantile round trip
        return standardized_threshold(design.m, n_of(design, z_prime), z_prime, c_of(design, z_prime))
    return -norm_quantile(budget)


def _stopped(m_prime: float, budget: float, target: float, efficacy: bool, pp_cap: float = float("nan")):
    if efficacy:
        return RecalcResult(m_prime, -math.inf, budget, 1.0, False, target, 1.0)
    return RecalcResult(m_prime, math.inf, budget, 0.0, True, target, pp_cap)


def recalc_fixed_type2(scenario: RevisedScenario) -> RecalcResult:
    """Smallest n' keeping both the conditional error and the predictive power.

    The critical value exhausts the original design's conditional error, and
    predictive power under the revised prior must reach what the original
    design offered under the original prior. Along the conditional-error
    curve conditional power is ``1 - Phi(q - theta*sqrt(n' - m'))``, which is
    increasing in ``n'``, so the constraints pin the solution down.
    """
    d = scenario.original_design
    m_p, z_p = float(scenario.m_prime), float(scenario.z_m_prime)
    budget = _budget(d, m_p, z_p)
    target = conditional_pp_target(d, scenario.original_prior, m_p, z_p)
    if budget >= 1.0:
        return _stopped(m_p, budget, target, efficacy=True)
    if budget <= 0.0:
        return _stopped(m_p, budget, target, efficacy=False, pp_cap=0.0)
    q = _threshold(d, m_p, z_p, budget)
    psi = scenario.revised_prior

    def pp(n_prime):
        return float(power.predictive_power_vec(psi, m_p, z_p, n_prime, conditional_critical_value(m_p, n_prime, z_p, q)))

    n_cap = scenario.cap()
    pp_cap = pp(n_cap)
    if pp_cap < target:
        return _stopped(m_p, budget, target, efficacy=False, pp_cap=pp_cap)
    lo = m_p * (1.0 + 1e-9)
    if pp(lo) >= target:
        n_prime = lo
    else:
        n_prime = find_root_monotone(lambda n_: pp(n_) - target, lo, n_cap, tol=1e-11)
    return RecalcResult(
        n_prime=n_prime,
        c_prime=conditional_critical_value(m_p, n_prime, z_p, q),
        conditional_error_budget=budget,
        pp_achieved=pp(n_prime),
        stopped_for_futility=False,
        pp_target=target,
        pp_at_cap=pp_cap,
    )


def _constraint_gradients(design, prior_phi, z_m, n0, c0, target, budget):
    m = design.m
    dn = FD_REL_STEP_N * n0

    def g(n, c):
        return power.conditional_power(m, n, z_m, c, 0.0) - budget

    def h(n, c):
        return target - power.predictive_power_vec(prior_phi, m, z_m, n, c)

    grad_g = np.array([(g(n0 + dn, c0) - g(n0 - dn, c0)) / (2 * dn),
                       (g(n0, c0 + FD_STEP_C) - g(n0, c0 - FD_STEP_C)) / (2 * FD_STEP_C)])
    grad_h = np.array([(h(n0 + dn, c0) - h(n0 - dn, c0)) / (2 * dn),
                       (h(n0, c0 + FD_STEP_C) - h(n0, c0 - FD_STEP_C)) / (2 * FD_STEP_C)])
    return grad_g, grad_h


def lagrange_multipliers(design: TwoStageDesign, prior_phi: TruncatedNormalPrior, z_m: float) -> LagrangeMultipliers:
    """Multipliers of the pointwise problem solved by ``design`` at ``z_m``.

    Gradients are central finite differences at ``(n(z_m), c(z_m))``.
    """
    if not design.in_continuation(z_m):
        raise ValueError(f"z_m={z_m} is outside the continuation region ({design.f}, {design.e})")
    n0, c0 = float(n_of(design, z_m)), float(c_of(design, z_m))
    budget = float(conditional_error(design, z_m))
    target = float(predictive_power_design(design, prior_phi, z_m))
    grad_g, grad_h = _constraint_gradients(design, prior_phi, z_m, n0, c0, target, budget)
    a = np.column_stack([grad_g, grad_h])
    cond = np.linalg.cond(a)
    if not cond <= MAX_CONDITION:
        raise SingularSystemError(f"constraint gradients singular at z_m={z_m} (condition {cond:.3g})")
    grad_f = np.array([1.0, 0.0])
    lam = np.linalg.solve(a, -grad_f)
    residual = float(np.linalg.norm(grad_f + a @ lam))
    return LagrangeMultipliers(float(lam[0]), float(lam[1]), residual)


def recalc_lambda(scenario: RevisedScenario, xatol: float = 1e-3) -> RecalcResult:
    """Recalculate by trading sample size against predictive power at the original rate.

    Minimises ``n' + lambda_h * (PP_target - PP_psi(n', c'(n')))`` over
    ``[m + 1, n_cap]`` with ``c'`` exhausting the conditional error. Only
    defined at the planned interim time.
    """
    d = scenario.original_design
    if not scenario.at_planned_time:
        raise ValueError("the multiplier approach is only defined at the planned interim time")
    m, z = d.m, float(scenario.z_m_prime)
    budget = float(conditional_error(d, z))
    target = float(predictive_power_design(d, scenario.original_prior, z))
    if not d.in_continuation(z):
        return _stopped(m, budget, target, efficacy=z >= d.e, pp_cap=0.0)
    lam = lagrange_multipliers(d, scenario.original_prior, z).lambda_h
    q = _threshold(d, m, z, budget)
    psi = scenario.revised_prior

    def pp(n_prime):
        return float(power.predictive_power_vec(psi, m, z, n_prime, conditional_critical_value(m, n_prime, z, q)))

    n_cap = scenario.cap()
    res = minimize_scalar(
        lambda n_: n_ + lam * (target - pp(n_)),
        bounds=(m + 1.0, n_cap),
        method="bounded",
        options={"xatol": xatol},
    )
    n_prime = float(res.x)
    return RecalcResult(
        n_prime=n_prime,
        c_prime=conditional_critical_value(m, n_prime, z, q),
        conditional_error_budget=budget,
        pp_achieved=pp(n_prime),
        stopped_for_futility=False,
        pp_target=target,
        pp_at_cap=pp(n_cap),
    )


def recalc_over_means(
    design: TwoStageDesign,
    prior_phi: TruncatedNormalPrior,
    z_m_prime: float,
    mus,
    method: str = "fixed-type2",
    m_prime: float | None = None,
    n_cap: float | None = None,
) -> list[RecalcResult]:
    """Recalculate for each revised-prior mean in ``mus`` (shifted priors)."""
    solver = {"fixed-type2": recalc_fixed_type2, "lambda": recalc_lambda}.get(method)
    if solver is None:
        raise ValueError(f"unknown method {method!r}")
    m_p = design.m if m_prime is None else m_prime
    if n_cap is None:
        n_cap = default_n_cap(prior_phi)
    out = []
    for mu in mus:
        sc = RevisedScenario(design, prior_phi, shifted_prior(prior_phi, mu), m_p, z_m_prime, n_cap)
        out.append(solver(sc))
    return out
