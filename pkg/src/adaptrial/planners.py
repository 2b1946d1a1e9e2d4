"""Single-stage sample size derivation and the naive predictive-power recalculation rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import power
from .designs import SingleStageDesign, TwoStageDesign, chebyshev_abscissae, n_of, c_of
from .stats_core import TruncatedNormalPrior, find_root_monotone, norm_quantile

DEFAULT_N_CAP = 100_000


class InfeasibleError(RuntimeError):
    """No design within the admissible bounds meets the constraints."""


def single_stage_sample_size(
    prior: TruncatedNormalPrior,
    alpha: float,
    ep_target: float,
    n_cap: int = DEFAULT_N_CAP,
) -> SingleStageDesign:
    """Smallest integer ``n`` whose expected power reaches ``ep_target``.

    The critical value is the ``1 - alpha`` normal quantile. Expected power is
    increasing in ``n``, so integer bisection on [1, n_cap] suffices.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 < ep_target < 1:
        raise ValueError("ep_target must lie in (0, 1)")
    c = norm_quantile(1.0 - alpha)
    if power.expected_power(prior, n_cap, c) < ep_target:
        raise InfeasibleError(
            f"expected power {ep_target} not reachable with n <= {n_cap}"
        )
    lo, hi = 0, n_cap  # EP(lo) < target unless lo == 0, EP(hi) >= target
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if power.expected_power(prior, mid, c) >= ep_target:
            hi = mid
        else:
            lo = mid
    return SingleStageDesign(n=hi, c=c)


def conditional_critical_value(m, n_prime, z_m, q):
    """Critical value giving conditional type-I error ``1 - Phi(q)`` at ``n_prime``.

    ``q`` is the standardised conditional threshold; keeping it fixed while
    ``n_prime`` varies is exactly the binding conditional-error constraint.
    """
    tau = m / np.asarray(n_prime, dtype=float)
    with np.errstate(invalid="ignore"):
        c = np.sqrt(tau) * z_m + np.sqrt(1.0 - tau) * q
    c = np.where(np.isposinf(q), np.inf, np.where(np.isneginf(q), -np.inf, c))
    return float(c) if c.ndim == 0 else c


def standardized_threshold(m, n, z_m, c):
    """Inverse of :func:`conditional_critical_value` for an existing (n, c)."""
    tau = m / n
    return (c - math.sqrt(tau) * z_m) / math.sqrt(1.0 - tau)


@dataclass(frozen=True)
class NaiveRecalcPolicy:
    beta_cond: float
    n_min: float
    n_max: float
    prior: TruncatedNormalPrior
    base: SingleStageDesign
    m: float

    def __post_init__(self):
        if not 0 < self.beta_cond < 1:
            raise ValueError("beta_cond must lie in (0, 1)")
        if not self.m < self.n_min <= self.n_max:
            raise ValueError("need m < n_min <= n_max")
        if not self.m < self.base.n:
            raise ValueError("interim must precede the base design's final analysis")

    @property
    def pp_target(self) -> float:
        return 1.0 - self.beta_cond


@dataclass(frozen=True)
class RecalcResult:
    n_prime: float
    c_prime: float
    conditional_error_budget: float
    pp_achieved: float
    stopped_for_futility: bool
    pp_target: float = float("nan")
    pp_at_cap: float = float("nan")


def _bisect_vec(g, lo, hi, iters=64):
    """Vectorised bisection for increasing ``g`` with g(lo) < 0 <= g(hi)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = g(mid) >= 0
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
        if np.all(hi - lo <= 1e-10 * hi):
            break
    return hi


def _naive_solve(policy: NaiveRecalcPolicy, z):
    """Vectorised core of :func:`naive_recalc_pointwise`."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    m, base, prior, target = policy.m, policy.base, policy.prior, policy.pp_target
    q = standardized_threshold(m, base.n, z, base.c)
    budget = power.conditional_power(m, base.n, z, base.c, 0.0)

    def pp(n_prime, idx=slice(None)):
        c_prime = conditional_critical_value(m, n_prime, z[idx], q[idx])
        return power.predictive_power_vec(prior, m, z[idx], n_prime, c_prime)

    pp_max = np.atleast_1d(pp(np.full(z.shape, float(policy.n_max))))
    pp_min = np.atleast_1d(pp(np.full(z.shape, float(policy.n_min))))
    feasible = pp_max >= target
    n_prime = np.where(pp_min >= target, float(policy.n_min), float(policy.n_max))
    need = feasible & (pp_min < target)
    if np.any(need):
        idx = np.flatnonzero(need)
        root = _bisect_vec(
            lambda n_: np.atleast_1d(pp(n_, idx)) - target,
            np.full(idx.shape, float(policy.n_min)),
            np.full(idx.shape, float(policy.n_max)),
        )
        n_prime[idx] = root
    c_prime = conditional_critical_value(m, n_prime, z, q)
    pp_ach = np.atleast_1d(pp(n_prime))
    n_prime = np.where(feasible, n_prime, float(m))
    c_prime = np.where(feasible, c_prime, np.inf)
    pp_ach = np.where(feasible, pp_ach, 0.0)
    return n_prime, c_prime, budget, pp_ach, ~feasible, pp_max


def naive_recalc_pointwise(policy: NaiveRecalcPolicy, z_m: float) -> RecalcResult:
    """Smallest n' meeting the predictive-power target under the conditional error principle.

    The new critical value always exhausts the base design's conditional
    error; if even ``n_max`` cannot reach the target the trial stops for
    futility (``n' = m``, ``c' = +inf``).
    """
    n_p, c_p, budget, pp_ach, stop, pp_max = _naive_solve(policy, z_m)
    return RecalcResult(
        n_prime=float(n_p[0]),
        c_prime=float(c_p[0]),
        conditional_error_budget=float(np.atleast_1d(budget)[0]),
        pp_achieved=float(pp_ach[0]),
        stopped_for_futility=bool(stop[0]),
        pp_target=policy.pp_target,
        pp_at_cap=float(pp_max[0]),
    )


def naive_futility_boundary(policy: NaiveRecalcPolicy, tol: float = 1e-6) -> float:
    """Interim value below which even ``n_max`` misses the predictive-power target."""
    m, base, target = policy.m, policy.base, policy.pp_target

    def slack(z):
        q = standardized_threshold(m, base.n, z, base.c)
        c_max = conditional_critical_value(m, policy.n_max, z, q)
        return power.predictive_power_vec(policy.prior, m, z, policy.n_max, c_max) - target

    lo, hi = -1.0, 1.0
    while slack(lo) > 0:
        lo -= 2.0
        if lo < -40:
            raise InfeasibleError("predictive-power target met for every interim value")
    while slack(hi) < 0:
        hi += 2.0
        if hi > 40:
            raise InfeasibleError("predictive-power target unreachable for every interim value")
    return find_root_monotone(slack, lo, hi, tol=tol)


def _floor_boundary(policy: NaiveRecalcPolicy, f: float, e: float) -> float | None:
    """Interim value above which ``n_min`` already meets the target, if inside (f, e)."""
    m, base, target = policy.m, policy.base, policy.pp_target

    def slack(z):
        q = standardized_threshold(m, base.n, z, base.c)
        c_min = conditional_critical_value(m, policy.n_min, z, q)
        return power.predictive_power_vec(policy.prior, m, z, policy.n_min, c_min) - target

    if slack(e) < 0 or slack(f) >= 0:
        return None
    return find_root_monotone(slack, f, e, tol=1e-10)


def naive_adaptive_design(
    policy: NaiveRecalcPolicy,
    grid_size: int = 401,
    n_tol: float = 0.5,
    c_tol: float = 1e-3,
    max_pivots: int = 1025,
) -> TwoStageDesign:
    """Two-stage design induced by applying the naive rule at every interim value.

    The rule never stops early for efficacy, so the efficacy boundary is a
    surrogate placed five standard units beyond the largest plausible interim
    statistic. Where the ``n_min`` floor binds the solution has a kink, which
    becomes a pivot; pivots are added on either side until the
    shape-preserving interpolant tracks the pointwise solutions on a
    ``grid_size`` check grid to within ``n_tol`` subjects and ``c_tol`` on the
    critical value.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    m = policy.m
    f = naive_futility_boundary(policy)
    e = math.sqrt(m) * policy.prior.upper + 5.0
    kink = _floor_boundary(policy, f, e)
    grid = np.linspace(f - 0.5, 4.0, grid_size)
    grid = grid[(grid > f) & (grid < e)]
    n_ref, c_ref, *_ = _naive_solve(policy, grid)
    q_f = standardized_threshold(m, policy.base.n, f, policy.base.c)

    k = 17
    while True:
        if kink is None:
            x = chebyshev_abscissae(f, e, k)
        else:
            # both sides cluster pivots at the kink so the interpolant cannot blur it
            x = np.concatenate([chebyshev_abscissae(f, kink, k), chebyshev_abscissae(kink, e, k)[1:]])
        n_piv, c_piv, *_ = _naive_solve(policy, x)
        # the left endpoint sits on the feasibility boundary itself
        n_piv[0] = policy.n_max
        c_piv[0] = conditional_critical_value(m, policy.n_max, f, q_f)
        design = TwoStageDesign(
            m=m, f=f, e=e, n_pivots=n_piv, c_pivots=c_piv,
            interpolation="pchip", pivot_abscissae=x,
        )
        err_n = np.max(np.abs(n_of(design, grid) - n_ref)) if grid.size else 0.0
        err_c = np.max(np.abs(c_of(design, grid) - c_ref)) if grid.size else 0.0
        if (err_n <= n_tol and err_c <= c_tol) or k >= max_pivots:
            return design
        k = 2 * k - 1
