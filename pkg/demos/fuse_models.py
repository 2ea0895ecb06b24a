"""
Combining score columns from several models
===========================================

Builds a matrix of three models scoring the same articles, then
compares fusion rules: mean, median, rank average, the best single
column, and a non-negative weighted sum fit by differential evolution
with cross-validated evaluation.
"""
import numpy as np

from refscore.fusion import (
    DEParams,
    best_single,
    cv_fusion,
    de_optimize,
    mean_fusion,
    median_fusion,
    rank_average_fusion,
)
from refscore.stats import ScoreCell, ScoreMatrix, spearman

rng = np.random.default_rng(3)
ids = [f"a{i:03d}" for i in range(240)]
quality = rng.uniform(1.0, 4.0, size=240)

# three models with different error levels, all reading one latent
matrix = ScoreMatrix()
for name, sd in (("model-a", 0.5), ("model-b", 0.8), ("model-c", 1.2)):
    noisy = np.clip(quality + rng.normal(0.0, sd, size=240), 1.0, 4.0)
    matrix.add_column((name, "zero"), {i: ScoreCell(float(v), 5) for i, v in zip(ids, noisy)})

gold = {i: float(q) for i, q in zip(ids, quality)}


def rho_of(fused):
    common = sorted(set(fused) & set(gold))
    return spearman([fused[i] for i in common], [gold[i] for i in common])


key, best_rho = best_single(matrix, gold)
print(f"best single column  {key[0]:8s} rho = {best_rho:.3f}")
print(f"mean fusion                  rho = {rho_of(mean_fusion(matrix)):.3f}")
print(f"median fusion                rho = {rho_of(median_fusion(matrix)):.3f}")
print(f"rank-average fusion          rho = {rho_of(rank_average_fusion(matrix)):.3f}")

# weights fit in-sample; the history is the per-generation best trace
params = DEParams(population=20, generations=60)
weights = de_optimize(matrix, gold, params=params, seed=5)
for col, w in zip(weights.columns, weights.weights):
    print(f"fitted weight {col[0]:8s} {w:.3f}")
print(f"in-sample objective          rho = {weights.objective:.3f}")

# held-out evaluation is the honest number
cv = cv_fusion(matrix, gold, folds=4, seed=5, params=params)
print(f"cross-validated fusion       rho = {cv.mean_rho:.3f}")
print("fold correlations:", [round(r, 3) for r in cv.fold_rhos])
