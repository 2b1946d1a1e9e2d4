"""Single- and two-stage designs and their unconditional operating characteristics.

A two-stage design looks at the data once after ``m`` subjects. Below the
futility boundary ``f`` the trial stops and accepts the null, above the
efficacy boundary ``e`` it stops and rejects; in between, the final sample
size ``n(z_m)`` and critical value ``c(z_m)`` are smooth interpolants
through pivot values placed at Chebyshev-Lobatto abscissae of ``[f, e]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import power
from .stats_core import TruncatedNormalPrior, gl_nodes, norm_pdf, norm_sf

INTERPOLATIONS = ("cubic", "pchip")


@dataclass(frozen=True)
class SingleStageDesign:
    n: float
    c: float

    def __post_init__(self):
        if not self.n >= 1:
            raise ValueError(f"sample size must be >= 1, got {self.n}")
        if not math.isfinite(self.c):
            raise ValueError("critical value must be finite")


def chebyshev_abscissae(f: float, e: float, k: int) -> np.ndarray:
    """Chebyshev-Lobatto points of [f, e], endpoints included, ascending."""
    if k == 1:
        return np.array([0.5 * (f + e)])
    j = np.arange(k)
    return 0.5 * (f + e) - 0.5 * (e - f) * np.cos(np.pi * j / (k - 1))


@dataclass(frozen=True)
class TwoStageDesign:
    m: float
    f: float
    e: float
    n_pivots: np.ndarray
    c_pivots: np.ndarray
    interpolation: str = "cubic"
    # None means Chebyshev-Lobatto points of [f, e]
    pivot_abscissae: np.ndarray | None = None

    def __post_init__(self):
        n_piv = np.asarray(self.n_pivots, dtype=float)
        c_piv = np.asarray(self.c_pivots, dtype=float)
        object.__setattr__(self, "n_pivots", n_piv)
        object.__setattr__(self, "c_pivots", c_piv)
        if self.pivot_abscissae is not None:
            x = np.asarray(self.pivot_abscissae, dtype=float)
            object.__setattr__(self, "pivot_abscissae", x)
            if x.shape != n_piv.shape or np.any(np.diff(x) <= 0):
                raise ValueError("pivot abscissae must be strictly increasing, one per pivot")
            if x[0] < self.f or x[-1] > self.e:
                raise ValueError("pivot abscissae must lie in [f, e]")
        if not self.m >= 1:
            raise ValueError(f"interim size must be >= 1, got {self.m}")
        if not self.f < self.e:
            raise ValueError(f"need futility boundary below efficacy boundary, got f={self.f}, e={self.e}")
        if n_piv.ndim != 1 or n_piv.shape != c_piv.shape or len(n_piv) < 2:
            raise ValueError("n_pivots and c_pivots must be 1-d arrays of equal length >= 2")
        if np.any(n_piv <= self.m):
            raise ValueError("all n pivots must exceed the interim size")
        if not np.all(np.isfinite(c_piv)):
            raise ValueError("c pivots must be finite")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")

    @property
    def pivot_count(self) -> int:
        return len(self.n_pivots)

    @cached_property
    def abscissae(self) -> np.ndarray:
        if self.pivot_abscissae is not None:
            return self.pivot_abscissae
        return chebyshev_abscissae(self.f, self.e, self.pivot_count)

    @cached_property
    def _n_interp(self):
        return self._make_interp(self.n_pivots)

    @cached_property
    def _c_interp(self):
        return self._make_interp(self.c_pivots)

    def _make_interp(self, values):
        if self.interpolation == "pchip" or len(values) < 4:
            return PchipInterpolator(self.abscissae, values)
        return CubicSpline(self.abscissae, values)

    def in_continuation(self, z_m):
        z_m = np.asarray(z_m, dtype=float)
        return (z_m > self.f) & (z_m < self.e)

    def __eq__(self, other):
        if not isinstance(other, TwoStageDesign):
            return NotImplemented
        return (
            self.m == other.m
            and self.f == other.f
            and self.e == other.e
            and self.interpolation == other.interpolation
            and np.array_equal(self.n_pivots, other.n_pivots)
            and np.array_equal(self.c_pivots, other.c_pivots)
            and np.array_equal(self.abscissae, other.abscissae)
        )

    __hash__ = None


Design = Union[SingleStageDesign, TwoStageDesign]


def n_of(design: TwoStageDesign, z_m):
    """Final sample size at interim statistic ``z_m``; equals ``m`` on early stops."""
    z_m = np.asarray(z_m, dtype=float)
    inside = design.in_continuation(z_m)
    z_in = np.clip(z_m, design.f, design.e)
    # the interpolant may dip marginally below a pivot; never below m
    n = np.maximum(design._n_interp(z_in), design.m * (1.0 + 1e-9))
    out = np.where(inside, n, float(design.m))
    return float(out) if out.ndim == 0 else out


def c_of(design: TwoStageDesign, z_m):
    """Final critical value at ``z_m``; +inf on futility, -inf on efficacy stops."""
    z_m = np.asarray(z_m, dtype=float)
    z_in = np.clip(z_m, design.f, design.e)
    c = design._c_interp(z_in)
    out = np.where(z_m <= design.f, np.inf, np.where(z_m >= design.e, -np.inf, c))
    return float(out) if out.ndim == 0 else out


def conditional_power_design(design: TwoStageDesign, z_m, theta):
    """Conditional rejection probability of ``design`` given ``z_m`` at effect ``theta``."""
    z_m = np.asarray(z_m, dtype=float)
    inside = design.in_continuation(z_m)
    n = np.where(inside, n_of(design, z_m), design.m + 1.0)
    c = np.where(inside, c_of(design, z_m), 0.0)
    cp = power.conditional_power(design.m, n, z_m, c, theta)
    out = np.where(inside, cp, np.where(z_m >= design.e, 1.0, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def conditional_error(design: TwoStageDesign, z_m):
    """Conditional type-I error given ``z_m``: 0 on futility, 1 on efficacy stops."""
    return conditional_power_design(design, z_m, 0.0)


def predictive_power_design(design: TwoStageDesign, prior: TruncatedNormalPrior, z_m):
    """Predictive power of ``design`` along ``z_m`` (0/1 in the stopping regions)."""
    z_m = np.asarray(z_m, dtype=float)
    inside = design.in_continuation(z_m)
    n = np.where(inside, n_of(design, z_m), design.m + 1.0)
    c = np.where(inside, c_of(design, z_m), 0.0)
    pp = power.predictive_power_vec(prior, design.m, z_m, n, c)
    out = np.where(inside, pp, np.where(z_m >= design.e, 1.0, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def continuation_nodes(design: TwoStageDesign, order: int | None = None, panel_width: float = 2.0):
    """Composite Gauss-Legendre nodes over (f, e).

    The stopping regions are handled in closed form, so region boundaries are
    always panel endpoints.
    """
    panels = max(1, int(math.ceil((design.e - design.f) / panel_width)))
    edges = np.linspace(design.f, design.e, panels + 1)
    z, w = gl_nodes(edges[:-1], edges[1:], order)
    return z.ravel(), w.ravel()


@dataclass(frozen=True)
class OperatingCharacteristics:
    max_type_one: float
    expected_power: float
    expected_n: float
    sd_n: float
    standard_errors: dict | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        out = {
            "max_type_one": self.max_type_one,
            "expected_power": self.expected_power,
            "expected_n": self.expected_n,
            "sd_n": self.sd_n,
        }
        if self.standard_errors is not None:
            out["standard_errors"] = dict(self.standard_errors)
        return out


def operating_characteristics(
    design: Design, prior: TruncatedNormalPrior, integer_n: bool = False
) -> OperatingCharacteristics:
    """Maximal type-I error, expected power, and mean/SD of the sample size.

    The type-I error is evaluated at theta = 0, expected power under the prior
    restricted to positive effects, and the sample-size moments under the
    unconditional prior.

    With ``integer_n`` the design is evaluated as it would be run: the final
    sample size is rounded up to the next integer for every interim value and
    the critical value is moved so the conditional type-I error is unchanged.
    """
    if isinstance(design, SingleStageDesign):
        n = float(math.ceil(design.n)) if integer_n else float(design.n)
        return OperatingCharacteristics(
            max_type_one=float(norm_sf(design.c)),
            expected_power=float(power.expected_power(prior, n, design.c)),
            expected_n=n,
            sd_n=0.0,
        )
    if integer_n:
        z, w = _integer_nodes(design)
        n, c = rounded_n_c(design, z)
    else:
        z, w = continuation_nodes(design)
        n, c = n_of(design, z), c_of(design, z)
    return _oc_from_nodes(design.m, design.e, z, w, n, c, prior)


def rounded_n_c(design: TwoStageDesign, z_m):
    """Integer sample sizes ceil(n(z_m)) with critical values preserving the conditional error."""
    m = design.m
    n = n_of(design, z_m)
    c = c_of(design, z_m)
    n_int = np.maximum(np.ceil(n - 1e-9), math.floor(m) + 1.0)
    q = (c - np.sqrt(m / n) * z_m) / np.sqrt(1.0 - m / n)
    c_int = np.sqrt(m / n_int) * z_m + np.sqrt(1.0 - m / n_int) * q
    return n_int, c_int


def _integer_nodes(design: TwoStageDesign, scan: int = 4000, order: int = 16):
    """Quadrature nodes with panel edges at every jump of ceil(n(z_m))."""
    zs = np.linspace(design.f, design.e, scan)
    steps = np.ceil(n_of(design, zs[1:-1]) - 1e-9)
    jumps = np.flatnonzero(np.diff(steps) != 0)
    lo = zs[1:-1][jumps]
    hi = zs[1:-1][jumps + 1]
    target = steps[jumps]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        same = np.ceil(n_of(design, mid) - 1e-9) == target
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    edges = np.unique(np.concatenate([[design.f, design.e], 0.5 * (lo + hi)]))
    z, w = gl_nodes(edges[:-1], edges[1:], order)
    return z.ravel(), w.ravel()


def _oc_from_nodes(m, e, z, w, n, c, prior) -> OperatingCharacteristics:
    sqrt_m = math.sqrt(m)
    type_one = norm_sf(e) + np.sum(w * norm_pdf(z) * power.conditional_power(m, n, z, c, 0.0))

    theta, tw = power.prior_nodes(prior, positive=True)
    theta = theta[:, None]
    cp = power.conditional_power(m, n[None, :], z[None, :], c[None, :], theta)
    dens = norm_pdf(z[None, :] - sqrt_m * theta)
    reject = norm_sf(e - sqrt_m * theta[:, 0]) + np.sum(w * dens * cp, axis=1)
    ep = float(np.sum(tw * reject))

    marg = power.marginal_zm_density(prior, m, z)
    en = m + np.sum(w * marg * (n - m))
    en2 = m * m + np.sum(w * marg * (n * n - m * m))
    sd = math.sqrt(max(en2 - en * en, 0.0))
    return OperatingCharacteristics(
        max_type_one=float(min(max(type_one, 0.0), 1.0)),
        expected_power=float(min(max(ep, 0.0), 1.0)),
        expected_n=float(en),
        sd_n=sd,
    )


def single_stage_as_two_stage(design: SingleStageDesign, m: float, span: float = 12.0) -> TwoStageDesign:
    """Embed a fixed design as a two-stage design whose interim is a formality.

    The stopping boundaries are pushed ``span`` standard units beyond any
    plausible interim value so early stops have negligible probability.
    """
    if not m < design.n:
        raise ValueError("interim size must be below the fixed sample size")
    return TwoStageDesign(
        m=m,
        f=-span,
        e=span + math.sqrt(m),
        n_pivots=np.full(7, float(design.n)),
        c_pivots=np.full(7, float(design.c)),
    )
