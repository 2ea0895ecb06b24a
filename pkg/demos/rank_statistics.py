"""
Rank correlation, bootstrap intervals, and the sign test
========================================================

The statistics behind every comparison in the harness: Spearman as
Pearson over mid-ranks, percentile bootstrap intervals, pooling across
units, and the exact binomial sign test.
"""
import numpy as np

from refscore.stats import (
    aggregate_across_units,
    bootstrap_ci,
    midranks,
    sign_test,
    spearman,
)

# mid-ranks: ties share the average of the positions they occupy
scores = [2.0, 3.5, 2.0, 4.0, 3.5]
print("values   ", scores)
print("mid-ranks", midranks(scores))

# a noisy monotone relationship
rng = np.random.default_rng(0)
quality = rng.uniform(1.0, 4.0, size=80)
predicted = quality + rng.normal(0.0, 0.7, size=80)
rho = spearman(predicted, quality)
lo, hi = bootstrap_ci(predicted, quality, b_reps=2000, seed=1)
print(f"\nrho = {rho:.3f}, 95% CI [{lo:.3f}, {hi:.3f}]")

# a perfectly monotone pair pins the interval at [1, 1]
x = np.arange(12.0)
print("monotone pair CI:", bootstrap_ci(x, np.exp(x), b_reps=500, seed=2))

# pooling per-unit correlations into mean and a t interval
unit_rhos = [0.61, 0.55, 0.72, 0.48, 0.66, 0.59]
mean, lo, hi = aggregate_across_units(unit_rhos)
print(f"\nsix units: mean rho {mean:.3f}, interval [{lo:.3f}, {hi:.3f}]")

# sign test: strategy A beat strategy B in 6 units out of 6
result = sign_test(wins=6, trials=6)
print(f"6/6 wins: p = {result.p_value:.6f}")
result = sign_test(wins=9, trials=10)
print(f"9/10 wins: p = {result.p_value:.6f}")
