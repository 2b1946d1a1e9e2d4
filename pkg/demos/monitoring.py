"""Interim monitoring: how ACP, OCP and PP read the same interim result.

Runs the single-stage design for the reference prior, takes an interim look
after 26 subjects and prints the three power estimates over a range of
observed effects, followed by their sampling behaviour at theta = 0.4.
"""

import math

from adaptrial import (
    InterimObservation,
    SimConfig,
    TruncatedNormalPrior,
    assumed_cp,
    estimator_sampling_stats,
    observed_cp,
    predictive_power,
    single_stage_sample_size,
)

prior = TruncatedNormalPrior(mu=0.4, sigma=0.2, lower=-0.5, upper=1.0)
design = single_stage_sample_size(prior, alpha=0.025, ep_target=0.8)
print(f"single-stage design: n={design.n:g}, c={design.c:.4f}")

m = 26
print(f"\n{'effect':>7} {'z_m':>6} {'ACP':>6} {'OCP':>6} {'PP':>6}")
for effect in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5):
    obs = InterimObservation(m, effect * math.sqrt(m))
    acp = assumed_cp(obs, design.n, design.c, theta1=0.4)
    ocp = observed_cp(obs, design.n, design.c)
    pp = predictive_power(prior, obs, design.n, design.c)
    print(f"{effect:7.2f} {obs.z_m:6.3f} {acp:6.3f} {ocp:6.3f} {pp:6.3f}")

print("\nestimators of conditional power at theta=0.4 (200k replicates)")
stats = estimator_sampling_stats(0.4, m, design.n, design.c, prior, 0.4, SimConfig(200_000, seed=1, theta=0.4))
for name, s in stats.items():
    print(f"  {name.upper():3s} bias {s.bias:+.4f}  MAE {s.mae:.4f}  MSE {s.mse:.4f}  SD {s.sd:.4f}")
