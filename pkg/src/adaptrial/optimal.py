"""Direct optimisation of two-stage designs.

Minimises the expected sample size under the planning prior over the
interim size ``m``, the stopping boundaries and the pivot values of
``n(.)`` and ``c(.)``, subject to a maximal type-I error rate and a minimal
expected power. ``m`` is integral and handled by a discrete descent; for
each ``m`` the continuous parameters go through an exterior quadratic
penalty scheme driven by Nelder-Mead, followed by an SLSQP polish that
lands exactly on the active constraints.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .designs import (
    OperatingCharacteristics,
    SingleStageDesign,
    TwoStageDesign,
    n_of,
    operating_characteristics,
)
from .planners import InfeasibleError, single_stage_sample_size
from .power import expected_power
from .stats_core import TruncatedNormalPrior, find_root_monotone, norm_sf

log = logging.getLogger(__name__)

# acceptance slack on the constraints of a returned design
TYPE_ONE_SLACK = 1e-4
POWER_SLACK = 1e-3


@dataclass(frozen=True)
class OptimizerConfig:
    alpha: float = 0.025
    beta: float = 0.2
    pivot_count: int = 7
    m_bounds: tuple[int, int] = (5, 150)
    n_bounds: tuple[float, float] = (1.0, 500.0)
    boundary_bounds: tuple[tuple[float, float], tuple[float, float]] = ((-2.0, 3.0), (0.5, 6.0))
    penalty_weight_schedule: tuple[float, ...] = (1e2, 1e4, 1e6)
    convergence_tol: float = 1e-4
    max_evaluations: int = 3000
    seed: int = 2020
    n_starts: int = 5
    # f == e: no continuation region, i.e. a single-stage design of size m
    collapse_continuation: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.pivot_count < 3:
            raise ValueError("pivot_count must be >= 3")
        lo, hi = self.m_bounds
        if not 1 <= lo <= hi:
            raise ValueError("m_bounds must be a nonempty range of positive integers")
        if not self.n_bounds[0] < self.n_bounds[1]:
            raise ValueError("n_bounds must be nonempty")
        for lo_b, hi_b in self.boundary_bounds:
            if not lo_b < hi_b:
                raise ValueError("boundary_bounds must be nonempty")
        if list(self.penalty_weight_schedule) != sorted(self.penalty_weight_schedule) or min(
            self.penalty_weight_schedule
        ) <= 0:
            raise ValueError("penalty weights must be positive and increasing")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "pivot_count": self.pivot_count,
            "m_bounds": list(self.m_bounds),
            "n_bounds": list(self.n_bounds),
            "boundary_bounds": [list(b) for b in self.boundary_bounds],
            "penalty_weight_schedule": list(self.penalty_weight_schedule),
            "convergence_tol": self.convergence_tol,
            "max_evaluations": self.max_evaluations,
            "seed": self.seed,
            "n_starts": self.n_starts,
            "collapse_continuation": self.collapse_continuation,
        }


@dataclass
class OptimizationResult:
    design: TwoStageDesign | SingleStageDesign
    characteristics: OperatingCharacteristics
    certified: bool = False
    m_profile: dict[int, float] = field(default_factory=dict)
    start_objectives: list[float] = field(default_factory=list)
    evaluations: int = 0


def feasible_seed_design(prior: TruncatedNormalPrior, config: OptimizerConfig) -> TwoStageDesign:
    """Group-sequential-like starting point built around the single-stage design."""
    single = single_stage_sample_size(prior, config.alpha, 1.0 - config.beta)
    k = config.pivot_count
    return TwoStageDesign(
        m=float(round(single.n / 3)),
        f=0.0,
        e=2.0,
        n_pivots=np.full(k, float(single.n)),
        c_pivots=np.full(k, float(single.c)),
    )


class _Problem:
    """Objective and constraints for a fixed interim size ``m``."""

    def __init__(self, prior, config: OptimizerConfig, m: int):
        self.prior = prior
        self.config = config
        self.m = float(m)
        self.k = config.pivot_count
        self.evaluations = 0
        self._cache: dict[bytes, OperatingCharacteristics | None] = {}

    def design(self, x) -> TwoStageDesign:
        k = self.k
        return TwoStageDesign(self.m, float(x[0]), float(x[1]), x[2 : 2 + k], x[2 + k :])

    def oc(self, x) -> OperatingCharacteristics | None:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._cache:
            self.evaluations += 1
            try:
                self._cache[key] = operating_characteristics(self.design(x), self.prior)
            except ValueError:
                self._cache[key] = None
            if len(self._cache) > 20000:
                self._cache.clear()
        return self._cache[key]

    def violations(self, oc: OperatingCharacteristics) -> tuple[float, float]:
        cfg = self.config
        return (
            max(0.0, oc.max_type_one - cfg.alpha) / cfg.alpha,
            max(0.0, 1.0 - cfg.beta - oc.expected_power) / cfg.beta,
        )

    def penalized(self, x, weight: float) -> float:
        if not self.in_bounds(x):
            return 1e10
        oc = self.oc(x)
        if oc is None:
            return 1e10
        g1, g2 = self.violations(oc)
        return oc.expected_n + weight * (g1 * g1 + g2 * g2)

    def in_bounds(self, x) -> bool:
        cfg = self.config
        (flo, fhi), (elo, ehi) = cfg.boundary_bounds
        n = x[2 : 2 + self.k]
        return (
            flo <= x[0] <= fhi
            and elo <= x[1] <= ehi
            and x[1] > x[0]
            and np.all(n > self.m)
            and np.all(n <= cfg.n_bounds[1])
        )

    def feasible(self, oc: OperatingCharacteristics | None, strict: bool = False) -> bool:
        if oc is None:
            return False
        cfg = self.config
        t1_slack = 0.0 if strict else TYPE_ONE_SLACK
        ep_slack = 0.0 if strict else POWER_SLACK
        return oc.max_type_one <= cfg.alpha + t1_slack and oc.expected_power >= 1.0 - cfg.beta - ep_slack

    def scales(self) -> np.ndarray:
        k = self.k
        return np.concatenate([[0.25, 0.25], np.full(k, 10.0), np.full(k, 0.1)])

    def bounds(self):
        cfg = self.config
        k = self.k
        n_lo = max(cfg.n_bounds[0], self.m + 0.5)
        return [cfg.boundary_bounds[0], cfg.boundary_bounds[1]] + [(n_lo, cfg.n_bounds[1])] * k + [(-5.0, 10.0)] * k


def _initial_simplex(x0, scales):
    dim = len(x0)
    simplex = np.tile(x0, (dim + 1, 1))
    for i in range(dim):
        simplex[i + 1, i] += scales[i]
    return simplex


def _penalty_search(problem: _Problem, x0, budget: int):
    """Exterior-penalty Nelder-Mead sweep over the weight schedule."""
    cfg = problem.config
    x = np.asarray(x0, dtype=float)
    per_stage = max(200, budget // len(cfg.penalty_weight_schedule))
    scales = problem.scales()
    for i, w in enumerate(cfg.penalty_weight_schedule):
        res = minimize(
            problem.penalized,
            x,
            args=(w,),
            method="Nelder-Mead",
            options={
                "maxfev": per_stage,
                "xatol": 1e-6,
                "fatol": cfg.convergence_tol,
                "initial_simplex": _initial_simplex(x, scales / (4.0**i)),
                "adaptive": True,
            },
        )
        x = res.x
    return x


def _polish(problem: _Problem, x0):
    """SLSQP refinement onto the active constraints; returns None if it fails."""
    cfg = problem.config
    k = problem.k

    def obj(x):
        oc = problem.oc(x)
        return 1e4 if oc is None else oc.expected_n

    def type_one(x):
        oc = problem.oc(x)
        return -1.0 if oc is None else (cfg.alpha - oc.max_type_one) / cfg.alpha

    def ep(x):
        oc = problem.oc(x)
        return -1.0 if oc is None else (oc.expected_power - (1.0 - cfg.beta)) / cfg.beta

    cons = [
        {"type": "ineq", "fun": type_one},
        {"type": "ineq", "fun": ep},
        {"type": "ineq", "fun": lambda x: x[1] - x[0] - 0.05},
        {"type": "ineq", "fun": lambda x: x[2 : 2 + k] - problem.m - 0.5},
    ]
    res = minimize(
        obj,
        x0,
        method="SLSQP",
        bounds=problem.bounds(),
        constraints=cons,
        options={"maxiter": 400, "ftol": 1e-10},
    )
    oc = problem.oc(res.x)
    if problem.feasible(oc):
        return res.x
    return None


def _solve_fixed_m(problem: _Problem, x0, budget: int):
    """Penalty search then polish; returns (x, oc) of the better feasible point."""
    x_pen = _penalty_search(problem, x0, budget)
    candidates = [x_pen]
    x_pol = _polish(problem, x_pen)
    if x_pol is not None:
        candidates.append(x_pol)
    best = None
    for x in candidates:
        oc = problem.oc(x)
        if problem.feasible(oc) and (best is None or oc.expected_n < best[1].expected_n):
            best = (x, oc)
    return best


def _design_vector(design: TwoStageDesign) -> np.ndarray:
    return np.concatenate([[design.f, design.e], design.n_pivots, design.c_pivots])


def _rescale_for_m(x, m_old: float, m_new: float, k: int):
    """Shift a solution to a neighbouring interim size keeping pivots above m."""
    x = np.array(x, dtype=float)
    n = x[2 : 2 + k]
    x[2 : 2 + k] = np.maximum(n, m_new + 1.0)
    return x


def _certify(problem: _Problem, x, oc, rng, radius: float = 1e-3, probes: int = 64) -> bool:
    """No strictly feasible neighbour in a small trust region improves the objective."""
    tol = problem.config.convergence_tol
    scales = problem.scales()
    dim = len(x)
    directions = [np.eye(dim)[i] * s for i in range(dim) for s in (1.0, -1.0)]
    directions += list(rng.standard_normal((probes, dim)))
    for d in directions:
        y = x + radius * scales * d
        if not problem.in_bounds(y):
            continue
        oc_y = problem.oc(y)
        if problem.feasible(oc_y, strict=True) and oc_y.expected_n < oc.expected_n - tol:
            return False
    return True


def _optimize_single_stage(prior, config: OptimizerConfig) -> OptimizationResult:
    # with no continuation region the design rejects iff Z_m > f
    c = find_root_monotone(lambda x: config.alpha - float(norm_sf(x)), -10.0, 10.0, tol=1e-12)
    profile = {}
    for m in range(config.m_bounds[0], config.m_bounds[1] + 1):
        ep = float(expected_power(prior, m, c))
        profile[m] = float(m)
        if ep >= 1.0 - config.beta:
            design = SingleStageDesign(n=float(m), c=c)
            return OptimizationResult(
                design=design,
                characteristics=operating_characteristics(design, prior),
                certified=True,
                m_profile=profile,
            )
    raise InfeasibleError("no single-stage design within m_bounds reaches the expected power")


def optimize_two_stage(prior: TruncatedNormalPrior, config: OptimizerConfig | None = None) -> OptimizationResult:
    """Two-stage design with minimal expected sample size under ``prior``.

    Raises:
        InfeasibleError: if no design within the configured bounds meets both
            the type-I error and the expected power constraint.
    """
    config = config or OptimizerConfig()
    if config.collapse_continuation:
        return _optimize_single_stage(prior, config)

    rng = np.random.default_rng(config.seed)
    seed = feasible_seed_design(prior, config)
    k = config.pivot_count
    m_lo, m_hi = config.m_bounds
    m0 = int(min(max(seed.m, m_lo), m_hi))
    x_seed = _design_vector(seed)

    solutions: dict[int, tuple[np.ndarray, OperatingCharacteristics]] = {}
    evaluations = 0

    def solve(m: int, x_start) -> float:
        nonlocal evaluations
        problem = _Problem(prior, config, m)
        found = _solve_fixed_m(problem, _rescale_for_m(x_start, m, m, k), config.max_evaluations)
        evaluations += problem.evaluations
        if found is None:
            solutions[m] = (np.asarray(x_start), None)
            log.debug("m=%d: no feasible design found", m)
            return math.inf
        solutions[m] = found
        log.debug("m=%d: E[n]=%.4f", m, found[1].expected_n)
        return found[1].expected_n

    def warm(m: int):
        near = [mm for mm in solutions if solutions[mm][1] is not None]
        if not near:
            return x_seed
        return solutions[min(near, key=lambda mm: (abs(mm - m), solutions[mm][1].expected_n))][0]

    # discrete descent over the integer interim size
    best_m, best_val = m0, solve(m0, x_seed)
    for step in (1, -1):
        m = best_m + step
        while m_lo <= m <= m_hi:
            val = solve(m, warm(m))
            if val < best_val - config.convergence_tol:
                best_m, best_val = m, val
                m += step
            else:
                break
        if best_m != m0:
            break
    if not math.isfinite(best_val):
        raise InfeasibleError("no two-stage design satisfies the type-I error and expected power constraints")

    # multistart at the selected interim size
    problem = _Problem(prior, config, best_m)
    starts = [solutions[best_m][0]]
    base = _rescale_for_m(x_seed, seed.m, best_m, k)
    for _ in range(config.n_starts - 1):
        jitter = problem.scales() * rng.uniform(-0.5, 0.5, size=len(base))
        start = base + jitter
        start[1] = max(start[1], start[0] + 0.5)
        starts.append(start)
    start_values = []
    best = solutions[best_m]
    for i, x0 in enumerate(starts):
        found = best if i == 0 else _solve_fixed_m(problem, x0, config.max_evaluations)
        start_values.append(math.inf if found is None else found[1].expected_n)
        if found is not None and found[1].expected_n < best[1].expected_n:
            best = found
    evaluations += problem.evaluations

    x, oc = best
    certified = _certify(problem, x, oc, rng)
    profile = {m: (sol[1].expected_n if sol[1] is not None else math.inf) for m, sol in sorted(solutions.items())}
    return OptimizationResult(
        design=problem.design(x),
        characteristics=oc,
        certified=certified,
        m_profile=profile,
        start_objectives=start_values,
        evaluations=evaluations,
    )


def predictive_power_profile(design: TwoStageDesign, prior: TruncatedNormalPrior, points: int = 201):
    """Interim grid over the continuation region with n(.) and predictive power on it."""
    from .designs import predictive_power_design

    eps = 1e-9 * (design.e - design.f)
    z = np.linspace(design.f + eps, design.e - eps, points)
    return z, n_of(design, z), predictive_power_design(design, prior, z)
