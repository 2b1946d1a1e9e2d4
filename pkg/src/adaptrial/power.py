"""Conditional power, its three estimators, and prior-averaged power.

All functions broadcast over numpy arrays. Sample sizes are positive reals so
that the optimizers can treat them as continuous; critical values may be
``+inf`` (never reject) or ``-inf`` (always reject) to encode early stopping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stats_core import (
    TruncatedNormalPrior,
    _effective_interval,
    gl_nodes,
    norm_pdf,
    norm_sf,
    trunc_normal_condition_positive,
    trunc_normal_pdf,
)


@dataclass(frozen=True)
class InterimObservation:
    m: float
    z_m: float

    def __post_init__(self):
        if not self.m >= 1:
            raise ValueError(f"interim size must be >= 1, got {self.m}")
        if not math.isfinite(self.z_m):
            raise ValueError(f"interim statistic must be finite, got {self.z_m}")

    @property
    def theta_hat(self) -> float:
        """Observed effect z_m / sqrt(m)."""
        return self.z_m / math.sqrt(self.m)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def conditional_power(m, n, z_m, c, theta):
    """Pr_theta[Z_n > c | Z_m = z_m] for 0 < m < n.

    Uses the normal conditional law of the final statistic given the interim
    one; ``c = +inf`` gives 0 and ``c = -inf`` gives 1.
    """
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(m <= 0) or np.any(m >= n):
        raise ValueError("conditional power needs 0 < m < n")
    z_m = np.asarray(z_m, dtype=float)
    c = np.asarray(c, dtype=float)
    theta = np.asarray(theta, dtype=float)
    tau = m / n
    sqrt_tau = np.sqrt(tau)
    with np.errstate(invalid="ignore"):
        arg = (c - np.sqrt(n) * theta - sqrt_tau * z_m + sqrt_tau * np.sqrt(m) * theta) / np.sqrt(1.0 - tau)
    arg = np.where(np.isposinf(c), np.inf, np.where(np.isneginf(c), -np.inf, arg))
    return _scalar(norm_sf(arg))


def rejection_probability(n, c, theta):
    """Pr_theta[Z_n > c] for a fixed sample size ``n``."""
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise ValueError("sample size must be positive")
    c = np.asarray(c, dtype=float)
    with np.errstate(invalid="ignore"):
        arg = c - np.sqrt(n) * np.asarray(theta, dtype=float)
    arg = np.where(np.isposinf(c), np.inf, np.where(np.isneginf(c), -np.inf, arg))
    return _scalar(norm_sf(arg))


def assumed_cp(obs: InterimObservation, n, c, theta1: float):
    """Conditional power at a fixed point alternative ``theta1``."""
    if not theta1 > 0:
        raise ValueError("point alternative must be positive")
    return conditional_power(obs.m, n, obs.z_m, c, theta1)


def observed_cp(obs: InterimObservation, n, c):
    """Plug-in conditional power at the observed effect."""
    return conditional_power(obs.m, n, obs.z_m, c, obs.theta_hat)


def posterior_params(prior: TruncatedNormalPrior, m, z_m):
    """Location and scale of the conjugate update, broadcasting over ``z_m``."""
    prec = 1.0 / prior.sigma**2 + np.asarray(m, dtype=float)
    var = 1.0 / prec
    mu = var * (prior.mu / prior.sigma**2 + np.sqrt(m) * np.asarray(z_m, dtype=float))
    return mu, np.sqrt(var)


def posterior(prior: TruncatedNormalPrior, obs: InterimObservation) -> TruncatedNormalPrior:
    """Posterior of the effect after observing ``obs``; bounds are unchanged."""
    mu, sd = posterior_params(prior, obs.m, obs.z_m)
    return TruncatedNormalPrior(float(mu), float(sd), prior.lower, prior.upper)


def _normalized_weights(mu, sd, lower, upper, order=None):
    """Quadrature nodes and self-normalised density weights of TN(mu, sd, [lower, upper]).

    ``mu`` and ``sd`` broadcast; the returned arrays carry a trailing node
    axis. Weights sum to one along that axis.
    """
    lo, hi = _effective_interval(mu, sd, lower, upper)
    nodes, w = gl_nodes(lo, hi, order)
    zz = (nodes - np.asarray(mu)[..., None]) / np.asarray(sd)[..., None]
    log_d = -0.5 * zz * zz
    log_d = log_d - log_d.max(axis=-1, keepdims=True)
    dens = w * np.exp(log_d)
    return nodes, dens / dens.sum(axis=-1, keepdims=True)


def posterior_positive_nodes(prior: TruncatedNormalPrior, m, z_m, order=None):
    """Nodes/weights of the posterior given ``z_m`` conditioned on a positive effect."""
    pos = trunc_normal_condition_positive(prior)
    mu, sd = posterior_params(prior, m, z_m)
    mu, sd = np.broadcast_arrays(mu, sd)
    return _normalized_weights(mu, sd, pos.lower, pos.upper, order)


def predictive_power_vec(prior: TruncatedNormalPrior, m, z_m, n, c, order=None):
    """Vectorised predictive power; ``z_m``, ``n`` and ``c`` broadcast together."""
    z_m, n, c = np.broadcast_arrays(
        np.asarray(z_m, dtype=float), np.asarray(n, dtype=float), np.asarray(c, dtype=float)
    )
    nodes, weights = posterior_positive_nodes(prior, m, z_m, order)
    cp = conditional_power(m, n[..., None], z_m[..., None], c[..., None], nodes)
    return _scalar(np.sum(weights * cp, axis=-1))


def predictive_power(prior: TruncatedNormalPrior, obs: InterimObservation, n, c):
    """Posterior-averaged conditional power, conditioning on a positive effect."""
    return predictive_power_vec(prior, obs.m, obs.z_m, n, c)


def prior_nodes(prior: TruncatedNormalPrior, positive: bool = False, order=None):
    """Quadrature nodes and normalised weights for integrating against ``prior``."""
    p = trunc_normal_condition_positive(prior) if positive else prior
    return _normalized_weights(np.asarray(p.mu), np.asarray(p.sigma), p.lower, p.upper, order)


def expected_power(prior: TruncatedNormalPrior, n, c):
    """Rejection probability averaged over the prior restricted to positive effects."""
    nodes, weights = prior_nodes(prior, positive=True)
    n = np.asarray(n, dtype=float)
    c = np.asarray(c, dtype=float)
    rp = rejection_probability(n[..., None], c[..., None], nodes)
    return _scalar(np.sum(weights * rp, axis=-1))


def marginal_zm_density(prior: TruncatedNormalPrior, m, z_m):
    """Prior-predictive density of the interim statistic at ``z_m``."""
    nodes, weights = prior_nodes(prior)
    z_m = np.asarray(z_m, dtype=float)
    dens = norm_pdf(z_m[..., None] - math.sqrt(m) * nodes)
    return _scalar(np.sum(weights * dens, axis=-1))


__all__ = [
    "InterimObservation",
    "assumed_cp",
    "conditional_power",
    "expected_power",
    "marginal_zm_density",
    "observed_cp",
    "posterior",
    "posterior_params",
    "predictive_power",
    "predictive_power_vec",
    "rejection_probability",
    "trunc_normal_pdf",
]
