"""Score fusion across model/strategy columns.

Four unsupervised fusions (mean, median, rank-average, best single) plus a
supervised one: non-negative column weights fitted by differential
evolution to maximize Spearman correlation with gold, evaluated honestly
via stratified cross-validation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import ColumnKey, ScoreCell, ScoreMatrix, midranks, spearman
from .util import substream


@dataclass(frozen=True)
class DEParams:
    """DE/rand/1/bin hyperparameters. Bounds are per-weight box constraints."""

    population: int = 40
    mutation: float = 0.8
    crossover: float = 0.9
    generations: int = 200
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if not (0.0 < self.mutation <= 2.0):
            raise ValueError("mutation factor out of range")
        if not (0.0 <= self.crossover <= 1.0):
            raise ValueError("crossover rate out of range")
        if self.generations < 1:
            raise ValueError("generations must be positive")
        if not (self.lower < self.upper):
            raise ValueError("lower bound must be below upper bound")
        if self.lower < 0.0:
            raise ValueError("weights must stay non-negative")


@dataclass(frozen=True)
class FusionWeights:
    """Fitted weights, the achieved objective, and the per-generation best trace."""

    columns: tuple[ColumnKey, ...]
    weights: tuple[float, ...]
    objective: float
    history: tuple[float, ...]

    def __post_init__(self):
        if len(self.columns) != len(self.weights):
            raise ValueError("one weight per column required")
        if any(w < 0.0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if all(w == 0.0 for w in self.weights):
            raise ValueError("weights must not all be zero")


def mean_fusion(matrix: ScoreMatrix) -> dict[str, float]:
    """Per-article mean over the columns that scored it."""
    return _availability_fusion(matrix, np.mean)


def median_fusion(matrix: ScoreMatrix) -> dict[str, float]:
    """Per-article median over the columns that scored it."""
    return _availability_fusion(matrix, np.median)


def _availability_fusion(matrix: ScoreMatrix, reducer) -> dict[str, float]:
    values: dict[str, list[float]] = {}
    for key in matrix.columns:
        for art_id, cell in matrix.cells[key].items():
            values.setdefault(art_id, []).append(cell.score)
    return {art_id: float(reducer(v)) for art_id, v in values.items()}


def rank_average_fusion(matrix: ScoreMatrix) -> dict[str, float]:
    """Average of per-column mid-ranks.

    Each column is ranked over the articles it scored; an article's fused
    value is the mean of its ranks across the columns that scored it.
    Invariant under strictly increasing per-column transforms.
    """
    rank_lists: dict[str, list[float]] = {}
    for key in matrix.columns:
        column = matrix.cells[key]
        ids = sorted(column)
        if not ids:
            continue
        ranks = midranks([column[i].score for i in ids])
        for art_id, rank in zip(ids, ranks):
            rank_lists.setdefault(art_id, []).append(float(rank))
    return {art_id: float(np.mean(r)) for art_id, r in rank_lists.items()}


def best_single(matrix: ScoreMatrix, gold_scores: dict[str, float]) -> tuple[ColumnKey, float]:
    """The single column best correlated with gold; ties go to the
    lexicographically first column key."""
    best_key: ColumnKey | None = None
    best_rho = -np.inf
    for key in matrix.columns:
        _, x, y = matrix.paired_with_gold(key, gold_scores)
        if len(x) < 3:
            continue
        try:
            rho = spearman(x, y)
        except ValueError:
            continue
        if rho > best_rho:
            best_key, best_rho = key, rho
    if best_key is None:
        raise ValueError("no column supports a correlation with this gold standard")
    return best_key, float(best_rho)


def _complete_design(matrix: ScoreMatrix, gold_scores: dict[str, float]):
    """Complete-case design matrix: articles scored by every column and gold."""
    ids = [i for i in matrix.complete_ids() if i in gold_scores]
    columns = matrix.columns
    design = np.array(
        [[matrix.cells[key][i].score for key in columns] for i in ids], dtype=float
    )
    gold = np.array([gold_scores[i] for i in ids], dtype=float)
    return ids, columns, design, gold


def _make_objective(design: np.ndarray, gold: np.ndarray):
    """Batch objective: rows of candidate weights -> Spearman rhos vs gold.

    Gold ranks never change over a fit, so they are centered once. The
    candidates' fused vectors are ranked together in one argsort; columns
    with ties (rare for weighted sums of floats) fall back to midranks.
    Degenerate candidates (constant fused vector) score -inf.
    """
    gold_ranks = midranks(gold)
    gold_ranks -= gold_ranks.mean()
    gold_norm = np.sqrt(gold_ranks.dot(gold_ranks))
    if gold_norm == 0.0:
        raise ValueError("correlation undefined: gold scores are constant")
    n = design.shape[0]
    base = np.arange(1.0, n + 1.0)[:, None]

    def objective(weight_rows: np.ndarray) -> np.ndarray:
        fused = design @ weight_rows.T
        order = np.argsort(fused, axis=0, kind="stable")
        ranks = np.empty_like(fused)
        np.put_along_axis(ranks, order, base, axis=0)
        svals = np.take_along_axis(fused, order, axis=0)
        for j in np.flatnonzero((svals[1:] == svals[:-1]).any(axis=0)):
            ranks[:, j] = midranks(fused[:, j])
        ranks -= ranks.mean(axis=0, keepdims=True)
        norms = np.sqrt((ranks * ranks).sum(axis=0)) * gold_norm
        zero = norms == 0.0
        norms[zero] = 1.0
        rhos = (ranks.T @ gold_ranks) / norms
        rhos[zero] = -np.inf
        return rhos

    return objective


def de_optimize(
    matrix: ScoreMatrix,
    gold_scores: dict[str, float],
    params: DEParams | None = None,
    seed: int = 0,
) -> FusionWeights:
    """Fit non-negative fusion weights by DE/rand/1/bin.

    Maximizes the Spearman correlation of the weighted score sum with gold
    over complete-case articles. Selection is elitist, so the best
    objective is non-decreasing generation over generation; every random
    draw comes from substreams of ``seed``, so the fit is reproducible.

    Out-of-bound mutant components are projected onto the bounds.
    """
    params = params or DEParams()
    ids, columns, design, gold = _complete_design(matrix, gold_scores)
    if len(columns) < 2:
        raise ValueError("fusion needs at least 2 columns")
    if len(ids) < 10:
        raise ValueError(f"fusion needs at least 10 complete-case articles, got {len(ids)}")
    dim = len(columns)
    np_ = params.population
    objective = _make_objective(design, gold)
    init_rng = substream(seed, "de-init")
    population = init_rng.uniform(params.lower, params.upper, size=(np_, dim))
    fitness = objective(population)
    if not np.isfinite(fitness).any():
        raise ValueError("objective undefined for every initial candidate")
    history: list[float] = []
    rows = np.arange(np_)[:, None]
    for gen in range(params.generations):
        # all of a generation's randomness is pre-drawn from one substream
        # in a fixed layout, and trials depend only on the generation-start
        # population, so evaluations could run concurrently (and in any
        # order) without changing the result
        rng = substream(seed, "de", gen)
        picks = rng.integers(0, np_ - 1, size=(np_, 3))
        while True:
            bad = (
                (picks[:, 0] == picks[:, 1])
                | (picks[:, 0] == picks[:, 2])
                | (picks[:, 1] == picks[:, 2])
            )
            if not bad.any():
                break
            # rows needing distinct partners are redrawn as a batch
            picks[bad] = rng.integers(0, np_ - 1, size=(int(bad.sum()), 3))
        # indices cover the other np_-1 slots; shift past the candidate's
        # own row so it never mates with itself
        partners = picks + (picks >= rows)
        r1, r2, r3 = partners.T
        mutants = population[r1] + params.mutation * (population[r2] - population[r3])
        mutants.clip(params.lower, params.upper, out=mutants)
        cross = rng.random((np_, dim)) < params.crossover
        cross[rows[:, 0], rng.integers(0, dim, size=np_)] = True
        trials = np.where(cross, mutants, population)
        trial_fits = objective(trials)
        improved = trial_fits >= fitness
        population[improved] = trials[improved]
        fitness[improved] = trial_fits[improved]
        history.append(float(fitness.max()))
    best_idx = int(np.argmax(fitness))
    return FusionWeights(
        columns=tuple(columns),
        weights=tuple(float(w) for w in population[best_idx]),
        objective=float(fitness[best_idx]),
        history=tuple(history),
    )


def fused_scores(matrix: ScoreMatrix, weights: FusionWeights) -> dict[str, float]:
    """Apply fitted weights to the complete-case articles of ``matrix``."""
    out: dict[str, float] = {}
    w = np.array(weights.weights)
    for art_id in matrix.complete_ids():
        row = np.array([matrix.cells[key][art_id].score for key in weights.columns])
        out[art_id] = float(row @ w)
    return out


def assign_folds(
    article_ids,
    folds: int,
    seed: int,
    uoa_by_article: dict[str, int] | None = None,
) -> dict[str, int]:
    """Deterministic fold assignment, stratified by uoa when one is given.

    Articles are shuffled within each stratum and dealt round-robin with a
    fold counter that runs on across strata, so overall fold sizes differ
    by at most one.
    """
    ids = list(article_ids)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > len(ids):
        raise ValueError(f"cannot spread {len(ids)} articles over {folds} folds")
    if uoa_by_article is None:
        strata = {0: sorted(ids)}
    else:
        strata = {}
        for art_id in sorted(ids):
            strata.setdefault(uoa_by_article[art_id], []).append(art_id)
    assignment: dict[str, int] = {}
    counter = 0
    for stratum in sorted(strata):
        members = list(strata[stratum])
        rng = substream(seed, "folds", stratum)
        rng.shuffle(members)
        for art_id in members:
            assignment[art_id] = counter % folds
            counter += 1
    return assignment


@dataclass(frozen=True)
class CvResult:
    """Cross-validated fusion: held-out correlations and per-fold fits."""

    mean_rho: float
    fold_rhos: tuple[float, ...]
    fold_weights: tuple[FusionWeights, ...]


def cv_fusion(
    matrix: ScoreMatrix,
    gold_scores: dict[str, float],
    folds: int = 10,
    seed: int = 0,
    params: DEParams | None = None,
    uoa_by_article: dict[str, int] | None = None,
) -> CvResult:
    """K-fold cross-validated DE fusion.

    Weights are fitted on the training folds only and evaluated by Spearman
    correlation on the held-out fold; the headline number is the mean of
    the fold correlations.
    """
    ids = [i for i in matrix.complete_ids() if i in gold_scores]
    if len(ids) < folds * 3:
        raise ValueError(
            f"cross-validation needs at least {folds * 3} complete-case articles, got {len(ids)}"
        )
    assignment = assign_folds(ids, folds, seed, uoa_by_article)
    fold_rhos: list[float] = []
    fold_weights: list[FusionWeights] = []
    for fold in range(folds):
        train_ids = [i for i in ids if assignment[i] != fold]
        test_ids = [i for i in ids if assignment[i] == fold]
        weights = de_optimize(
            matrix.subset(train_ids), gold_scores, params=params, seed=seed + fold
        )
        fused = fused_scores(matrix.subset(test_ids), weights)
        x = [fused[i] for i in test_ids]
        y = [gold_scores[i] for i in test_ids]
        try:
            rho = spearman(x, y)
        except ValueError as exc:
            raise ValueError(f"fold {fold} cannot support a correlation: {exc}") from None
        fold_rhos.append(rho)
        fold_weights.append(weights)
    return CvResult(
        mean_rho=float(np.mean(fold_rhos)),
        fold_rhos=tuple(fold_rhos),
        fold_weights=tuple(fold_weights),
    )


@dataclass(frozen=True)
class FusionRow:
    """One row of the fusion comparison table."""

    label: str
    mean_rho: float
    median_rho: float
    best_single_rho: float
    rank_average_rho: float
    cv_rho: float

    def as_mapping(self) -> dict[str, float | str]:
        return {
            "uoa": self.label,
            "mean": self.mean_rho,
            "median": self.median_rho,
            "best-single": self.best_single_rho,
            "rank-average": self.rank_average_rho,
            "cv-mean": self.cv_rho,
        }


def fusion_row(
    label: str,
    matrix: ScoreMatrix,
    gold_scores: dict[str, float],
    folds: int = 10,
    seed: int = 0,
    params: DEParams | None = None,
    uoa_by_article: dict[str, int] | None = None,
) -> tuple[FusionRow, CvResult]:
    """Evaluate every fusion strategy against one gold standard."""

    def rho_of(fused: dict[str, float]) -> float:
        ids = sorted(set(fused) & set(gold_scores))
        return spearman([fused[i] for i in ids], [gold_scores[i] for i in ids])

    _, best_rho = best_single(matrix, gold_scores)
    cv = cv_fusion(
        matrix, gold_scores, folds=folds, seed=seed, params=params,
        uoa_by_article=uoa_by_article,
    )
    row = FusionRow(
        label=label,
        mean_rho=rho_of(mean_fusion(matrix)),
        median_rho=rho_of(median_fusion(matrix)),
        best_single_rho=best_rho,
        rank_average_rho=rho_of(rank_average_fusion(matrix)),
        cv_rho=cv.mean_rho,
    )
    return row, cv


def rank_normalized_pool(
    matrix: ScoreMatrix,
    gold_scores: dict[str, float],
    uoa_by_article: dict[str, int],
) -> tuple[ScoreMatrix, dict[str, float]]:
    """Pool articles across uoas after within-uoa rank normalization.

    Scores and gold are replaced by mid-ranks scaled into [1, 4] within
    each uoa, so units with different score levels can share one table row
    without one unit dominating. Ranking is monotone within uoa, so
    per-uoa correlations are unchanged.
    """
    pooled = ScoreMatrix(matrix.configured_k)
    for key in matrix.columns:
        column = matrix.cells[key]
        new_column: dict[str, ScoreCell] = {}
        by_uoa: dict[int, list[str]] = {}
        for art_id in column:
            by_uoa.setdefault(uoa_by_article[art_id], []).append(art_id)
        for uoa, ids in sorted(by_uoa.items()):
            ids = sorted(ids)
            ranks = midranks([column[i].score for i in ids])
            scaled = 1.0 + 3.0 * (ranks - 1.0) / max(len(ids) - 1.0, 1.0)
            for art_id, value in zip(ids, scaled):
                new_column[art_id] = ScoreCell(
                    score=float(value), effective_k=column[art_id].effective_k
                )
        pooled.cells[key] = new_column
    pooled_gold: dict[str, float] = {}
    by_uoa_gold: dict[int, list[str]] = {}
    for art_id in gold_scores:
        if art_id in uoa_by_article:
            by_uoa_gold.setdefault(uoa_by_article[art_id], []).append(art_id)
    for uoa, ids in sorted(by_uoa_gold.items()):
        ids = sorted(ids)
        ranks = midranks([gold_scores[i] for i in ids])
        scaled = 1.0 + 3.0 * (ranks - 1.0) / max(len(ids) - 1.0, 1.0)
        for art_id, value in zip(ids, scaled):
            pooled_gold[art_id] = float(value)
    return pooled, pooled_gold
