"""Scalar probability kernels, quadrature and root finding.

Everything else in the package is built on the handful of functions here:
the standard normal CDF and quantile, the truncated normal density used for
effect-size priors, affine-mapped Gauss-Legendre rules and a bracketing
bisection solver.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

DEFAULT_QUAD_ORDER = 64
ROOT_TOL = 1e-8


def quad_order() -> int:
    """Default Gauss-Legendre order, overridable via ``ADAPTRIAL_QUAD_ORDER``."""
    raw = os.environ.get("ADAPTRIAL_QUAD_ORDER")
    if raw is None:
        return DEFAULT_QUAD_ORDER
    try:
        order = int(raw)
    except ValueError:
        raise ValueError(f"ADAPTRIAL_QUAD_ORDER must be an integer, got {raw!r}")
    if order < 8:
        raise ValueError(f"ADAPTRIAL_QUAD_ORDER must be >= 8, got {order}")
    return order


def norm_cdf(x):
    """Standard normal CDF; saturates to 0/1 in the tails."""
    return special.ndtr(x)


def norm_sf(x):
    """Standard normal survival function 1 - Phi(x), accurate in the upper tail."""
    return special.ndtr(-np.asarray(x, dtype=float))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def norm_quantile(p):
    """Inverse of :func:`norm_cdf` on the open unit interval."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
        raise ValueError(f"norm_quantile requires 0 < p < 1, got {p}")
    out = special.ndtri(p_arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TruncatedNormalPrior:
    """Normal(mu, sigma^2) restricted to ``[lower, upper]``.

    Used both for the planning prior on the effect size and for the
    conjugate posterior after an interim look (same bounds, updated location
    and scale).
    """

    mu: float
    sigma: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.lower < self.upper:
            raise ValueError(
                f"lower must be below upper, got [{self.lower}, {self.upper}]"
            )

    @property
    def log_mass(self) -> float:
        """log of the untruncated normal mass inside the bounds."""
        a = (self.lower - self.mu) / self.sigma
        b = (self.upper - self.mu) / self.sigma
        return _log_interval_mass(a, b)

    def pdf(self, theta):
        return trunc_normal_pdf(self, theta)

    def effective_support(self, width: float = 12.0) -> tuple[float, float]:
        """Sub-interval of the support carrying all but a negligible tail.

        Keeps quadrature nodes where the density lives, which matters for
        near-point priors and posteriors sitting far outside the bounds.
        """
        return _effective_interval(self.mu, self.sigma, self.lower, self.upper, width)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "lower": self.lower, "upper": self.upper}

    @classmethod
    def from_dict(cls, d: dict) -> "TruncatedNormalPrior":
        return cls(float(d["mu"]), float(d["sigma"]), float(d["lower"]), float(d["upper"]))


def _log_interval_mass(a, b):
    """log(Phi(b) - Phi(a)) for a < b, stable in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # work in whichever tail keeps the difference well conditioned
    upper_tail = a > 0
    lo = np.where(upper_tail, -b, a)
    hi = np.where(upper_tail, -a, b)
    log_hi = special.log_ndtr(hi)
    log_lo = special.log_ndtr(lo)
    with np.errstate(divide="ignore"):
        out = log_hi + np.log1p(-np.exp(log_lo - log_hi))
    return float(out) if out.ndim == 0 else out


def _effective_interval(mu, sigma, lower, upper, width=12.0):
    """Vectorised version of :meth:`TruncatedNormalPrior.effective_support`."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    lo = np.clip(mu - width * sigma, lower, upper)
    hi = np.clip(mu + width * sigma, lower, upper)
    # mean far outside the support: mass piles up against the near bound with
    # an approximately exponential profile of scale sigma^2 / distance
    below = mu < lower
    above = mu > upper
    dist_lo = np.maximum(lower - mu, 1e-300)
    dist_hi = np.maximum(mu - upper, 1e-300)
    span_lo = np.minimum(width * sigma, 3.0 * width * sigma**2 / dist_lo)
    span_hi = np.minimum(width * sigma, 3.0 * width * sigma**2 / dist_hi)
    lo = np.where(below, lower, np.where(above, np.maximum(upper - span_hi, lower), lo))
    hi = np.where(below, np.minimum(lower + span_lo, upper), np.where(above, upper, hi))
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def trunc_normal_pdf(prior: TruncatedNormalPrior, theta):
    """Density of ``prior`` at ``theta``; zero outside the truncation bounds."""
    theta = np.asarray(theta, dtype=float)
    z = (theta - prior.mu) / prior.sigma
    log_dens = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - math.log(prior.sigma) - prior.log_mass
    inside = (theta >= prior.lower) & (theta <= prior.upper)
    out = np.where(inside, np.exp(log_dens), 0.0)
    return float(out) if out.ndim == 0 else out


def trunc_normal_condition_positive(prior: TruncatedNormalPrior) -> TruncatedNormalPrior:
    """Condition on a positive effect by moving the lower bound to zero."""
    if prior.upper <= 0:
        raise ValueError("prior has no mass on positive effect sizes (upper <= 0)")
    return replace(prior, lower=max(prior.lower, 0.0))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)

    def integrate(self, f: Callable) -> float:
        return float(np.sum(self.weights * f(self.nodes)))


@lru_cache(maxsize=32)
def _legendre_reference(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(order: int, a: float, b: float) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes mapped affinely onto [a, b]."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    x, w = _legendre_reference(int(order))
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=half * x + 0.5 * (a + b), weights=half * w)


def gl_nodes(a, b, order: int | None = None):
    """Broadcasting Gauss-Legendre nodes and weights.

    ``a`` and ``b`` may be arrays of interval endpoints; the returned arrays
    carry a trailing axis of length ``order``. Degenerate intervals (a == b)
    get zero weights.
    """
    order = quad_order() if order is None else order
    x, w = _legendre_reference(order)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def find_root_monotone(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = ROOT_TOL,
    max_iter: int = 200,
) -> float:
    """Bisection for a monotone ``f`` with a sign change on [lo, hi].

    Stops once ``|f(x)| <= tol`` or the bracket is narrower than ``tol``; in
    the latter case the midpoint of the final bracket is returned, which
    keeps the result well defined for functions that are flat near the root.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError(
            f"root not bracketed: f({lo})={flo:.3g}, f({hi})={fhi:.3g}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if abs(fmid) <= tol or hi - lo <= tol:
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)
