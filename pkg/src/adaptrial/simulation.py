"""Monte Carlo counterpart of the quadrature engine.

Replicates are split into fixed-size chunks. Chunk ``k`` draws from its own
Philox stream spawned from ``SeedSequence(seed)``, so results do not depend on
how many workers process the chunks, and partial sums are merged in chunk
order. Normal variates come from numpy's ziggurat sampler.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import power
from .designs import OperatingCharacteristics, TwoStageDesign, c_of, n_of, rounded_n_c
from .stats_core import TruncatedNormalPrior

CHUNK = 1 << 20


@dataclass(frozen=True)
class SimConfig:
    """Replicate count, seed, and either a fixed effect or a prior to draw it from."""

    replicates: int
    seed: int
    theta: float | None = None
    prior: TruncatedNormalPrior | None = None
    chunk_size: int = CHUNK
    workers: int = 1

    def __post_init__(self):
        if not (isinstance(self.replicates, (int, np.integer)) and self.replicates >= 1):
            raise ValueError("replicates must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if (self.theta is None) == (self.prior is None):
            raise ValueError("give exactly one of theta or prior")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")

    def chunks(self) -> list[tuple[int, np.random.Generator]]:
        """(size, generator) per chunk; generators are independent Philox streams."""
        sizes = [self.chunk_size] * (self.replicates // self.chunk_size)
        if self.replicates % self.chunk_size:
            sizes.append(self.replicates % self.chunk_size)
        seeds = np.random.SeedSequence(int(self.seed)).spawn(len(sizes))
        return [(s, np.random.Generator(np.random.Philox(ss))) for s, ss in zip(sizes, seeds)]


def sample_prior(prior: TruncatedNormalPrior, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from a truncated normal."""
    a = (prior.lower - prior.mu) / prior.sigma
    b = (prior.upper - prior.mu) / prior.sigma
    u = rng.random(size)
    if a > 0:
        # upper tail: work with survival probabilities to keep resolution
        sa, sb = special.ndtr(-a), special.ndtr(-b)
        return prior.mu - prior.sigma * special.ndtri(sb + u * (sa - sb))
    pa, pb = special.ndtr(a), special.ndtr(b)
    return prior.mu + prior.sigma * special.ndtri(pa + u * (pb - pa))


def _map_chunks(config: SimConfig, fn):
    chunks = config.chunks()
    if config.workers == 1:
        return [fn(size, rng) for size, rng in chunks]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda sr: fn(*sr), chunks))


def _two_stage_chunk(design: TwoStageDesign, config: SimConfig, integer_n: bool, size: int, rng):
    m, f, e = design.m, design.f, design.e
    if config.prior is not None:
        theta = sample_prior(config.prior, size, rng)
    else:
        theta = np.full(size, float(config.theta))
    z_m = math.sqrt(m) * theta + rng.standard_normal(size)
    stage_two = rng.standard_normal(size)
    go = (z_m > f) & (z_m < e)
    n = np.full(size, float(m))
    c = np.where(z_m >= e, -np.inf, np.inf)
    if integer_n:
        n_go, c_go = rounded_n_c(design, z_m[go])
    else:
        n_go, c_go = n_of(design, z_m[go]), c_of(design, z_m[go])
    n[go], c[go] = n_go, c_go
    z_n = z_m.copy()
    extra = n[go] - m
    z_n[go] = (math.sqrt(m) * z_m[go] + extra * theta[go] + np.sqrt(extra) * stage_two[go]) / np.sqrt(n[go])
    reject = z_n > c
    pos = theta > 0
    dn = n - m  # shifted so the moment sums stay well conditioned
    return np.array([
        size, reject.sum(), pos.sum(), (reject & pos).sum(),
        dn.sum(), (dn**2).sum(), (dn**3).sum(), (dn**4).sum(),
    ], dtype=float)


def simulate_two_stage(design: TwoStageDesign, config: SimConfig, integer_n: bool = False) -> OperatingCharacteristics:
    """Monte Carlo operating characteristics with standard errors.

    With a fixed ``theta`` the rejection rate is reported as
    ``expected_power`` and, when ``theta == 0``, also as ``max_type_one``.
    In prior mode the effect is drawn per replicate; expected power uses the
    replicates with a positive effect (rejection sampling) while the
    sample-size moments use all replicates. Fields that a mode cannot
    estimate are NaN.
    """
    parts = _map_chunks(config, lambda s, r: _two_stage_chunk(design, config, integer_n, s, r))
    tot = np.sum(parts, axis=0)
    size, rej, pos, rej_pos = tot[:4]
    s1, s2, s3, s4 = tot[4:] / size
    mean_dn = s1
    var = max(s2 - s1**2, 0.0)
    m4 = s4 - 4 * s3 * s1 + 6 * s2 * s1**2 - 3 * s1**4
    sd = math.sqrt(var)
    se_sd = math.sqrt(max(m4 - var**2, 0.0) / (4 * var * size)) if var > 0 else 0.0

    if config.prior is not None:
        p = rej_pos / pos if pos else math.nan
        se_p = math.sqrt(p * (1 - p) / pos) if pos else math.nan
        type_one, se_t = math.nan, math.nan
    else:
        p = rej / size
        se_p = math.sqrt(p * (1 - p) / size)
        type_one, se_t = (p, se_p) if config.theta == 0 else (math.nan, math.nan)
    return OperatingCharacteristics(
        max_type_one=float(type_one),
        expected_power=float(p),
        expected_n=float(design.m + mean_dn),
        sd_n=sd,
        standard_errors={
            "max_type_one": se_t,
            "expected_power": se_p,
            "expected_n": sd / math.sqrt(size),
            "sd_n": se_sd,
        },
    )


@dataclass(frozen=True)
class EstimatorStats:
    """Sampling summary of one conditional-power estimator against the truth.

    ``sd`` is the spread of the estimator itself; ``error_sd`` is the spread
    of its deviation from the true conditional power at the same ``z_m``.
    """

    bias: float
    mae: float
    mse: float
    sd: float
    error_sd: float
    skewness: float
    se_bias: float
    se_mae: float
    se_mse: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


ESTIMATORS = ("acp", "ocp", "pp")


def estimator_sampling_stats(
    theta: float,
    m: float,
    n: float,
    c: float,
    prior: TruncatedNormalPrior,
    theta1: float,
    config: SimConfig,
    block: int = 1 << 16,
) -> dict[str, EstimatorStats]:
    """Bias, MAE, MSE, spread and skewness of ACP, OCP and PP at a fixed effect.

    Each replicate draws ``z_m ~ N(sqrt(m) theta, 1)`` and compares every
    estimator with the true conditional power at ``theta``. ``config.theta``
    is ignored in favour of the explicit ``theta`` argument.
    """
    if not 0 < m < n:
        raise ValueError("need 0 < m < n")

    def chunk(size, rng):
        z_all = math.sqrt(m) * theta + rng.standard_normal(size)
        acc = {k: np.zeros(9) for k in ESTIMATORS}
        for start in range(0, size, block):
            z = z_all[start:start + block]
            truth = power.conditional_power(m, n, z, c, theta)
            est = {
                "acp": power.conditional_power(m, n, z, c, theta1),
                "ocp": power.conditional_power(m, n, z, c, z / math.sqrt(m)),
                "pp": power.predictive_power_vec(prior, m, z, n, c),
            }
            for k, v in est.items():
                err = v - truth
                ae, sq = np.abs(err), err * err
                acc[k] += [
                    err.sum(), (err * err).sum(), ae.sum(), (ae * ae).sum(), sq.sum(), (sq * sq).sum(),
                    v.sum(), (v * v).sum(), (v * v * v).sum(),
                ]
        return acc

    cfg = SimConfig(config.replicates, config.seed, theta=theta, chunk_size=config.chunk_size, workers=config.workers)
    parts = _map_chunks(cfg, chunk)
    size = float(config.replicates)
    out = {}
    for k in ESTIMATORS:
        s = np.sum([p[k] for p in parts], axis=0) / size
        e1, e2, a1, a2, q1, q2, v1, v2, v3 = s
        var_v = max(v2 - v1**2, 0.0)
        sd_v = math.sqrt(var_v)
        m3 = v3 - 3 * v1 * v2 + 2 * v1**3
        out[k] = EstimatorStats(
            bias=float(e1),
            mae=float(a1),
            mse=float(q1),
            sd=sd_v,
            error_sd=math.sqrt(max(q1 - e1**2, 0.0)),
            skewness=float(m3 / sd_v**3) if sd_v > 0 else 0.0,
            se_bias=math.sqrt(max(e2 - e1**2, 0.0) / size),
            se_mae=math.sqrt(max(a2 - a1**2, 0.0) / size),
            se_mse=math.sqrt(max(q2 - q1**2, 0.0) / size),
        )
    return out
