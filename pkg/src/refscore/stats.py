"""Rank statistics for model-score evaluation.

Spearman correlation is computed from first principles (Pearson correlation
of mid-ranks) so tied scores are handled exactly. Confidence intervals come
from a seeded percentile bootstrap over resampled (model, gold) pairs, and
sign tests use exact binomial tail probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy import stats as sps

from .util import substream

SCORE_MIN = 1.0
SCORE_MAX = 4.0

#: status values on scored records
STATUS_OK = "ok"
STATUS_FAILED = "failed"

_BOOTSTRAP_MAX_REDRAW = 100


def midranks(values) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mid-rank.

    Parameters
    ----------
    values : array_like
        One-dimensional data.

    Returns
    -------
    ndarray of float
        ``out[i]`` is the mean of the positions (1..n) that ``values[i]``'s
        tie group occupies in the sorted order.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ValueError("midranks expects a one-dimensional array")
    n = len(x)
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    # tie groups share the mean of the positions they occupy
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], n]
    group_rank = 0.5 * (starts + ends - 1) + 1.0
    ranks = np.empty(n, dtype=float)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of mid-ranks.

    Raises
    ------
    ValueError
        If the vectors differ in length, have fewer than 3 pairs, or either
        is constant (the correlation is undefined).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman expects two equal-length vectors")
    if len(x) < 3:
        raise ValueError("spearman needs at least 3 pairs")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("correlation undefined for a constant vector")
    rx = midranks(x)
    ry = midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(rx.dot(ry) / np.sqrt(rx.dot(rx) * ry.dot(ry)))


def bootstrap_ci(x, y, b_reps: int = 1000, alpha: float = 0.05, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the Spearman correlation.

    Pairs are resampled with replacement ``b_reps`` times; the interval is
    the [alpha/2, 1 - alpha/2] percentile span of the replicate
    correlations. Replicate ``i`` draws from a substream keyed (seed, i),
    so results do not depend on evaluation order. Resamples in which either
    vector is constant are redrawn (bounded) and counted; if more than half
    of all draws are degenerate the input is rejected.

    Returns
    -------
    (float, float)
        Lower and upper interval endpoints.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("bootstrap_ci expects two equal-length vectors")
    if b_reps < 1:
        raise ValueError("b_reps must be positive")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    spearman(x, y)  # validates length and non-degeneracy
    n = len(x)
    replicates = np.empty(b_reps, dtype=float)
    degenerate = 0
    total_draws = 0
    for i in range(b_reps):
        rng = substream(seed, i)
        for _ in range(_BOOTSTRAP_MAX_REDRAW):
            idx = rng.integers(0, n, size=n)
            total_draws += 1
            xs = x[idx]
            ys = y[idx]
            if np.all(xs == xs[0]) or np.all(ys == ys[0]):
                degenerate += 1
                continue
            replicates[i] = _spearman_fast(xs, ys)
            break
        else:
            raise ValueError("input too degenerate: resamples keep collapsing to constants")
    if degenerate > 0.5 * total_draws:
        raise ValueError("input too degenerate: more than half of bootstrap resamples were constant")
    lo, hi = np.quantile(replicates, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def _spearman_fast(x: np.ndarray, y: np.ndarray) -> float:
    # internal: callers have already screened out constant vectors
    rx = midranks(x)
    ry = midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(rx.dot(ry) / np.sqrt(rx.dot(rx) * ry.dot(ry)))


@dataclass(frozen=True)
class CorrelationResult:
    """A correlation with its bootstrap interval and sample size."""

    rho: float
    ci_low: float
    ci_high: float
    n: int
    b_reps: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("correlation requires n >= 3")
        if not (self.ci_low <= self.rho <= self.ci_high):
            raise ValueError("point estimate outside its percentile interval")


def correlate(x, y, b_reps: int = 1000, alpha: float = 0.05, seed: int = 0) -> CorrelationResult:
    """Spearman correlation with a percentile bootstrap interval."""
    rho = spearman(x, y)
    lo, hi = bootstrap_ci(x, y, b_reps=b_reps, alpha=alpha, seed=seed)
    return CorrelationResult(rho=rho, ci_low=lo, ci_high=hi, n=len(np.asarray(x)), b_reps=b_reps)


def aggregate_across_units(rhos) -> tuple[float, float, float]:
    """Cross-unit mean correlation with a t-interval.

    The interval is mean +/- t(0.975, m-1) * sd / sqrt(m) over the per-unit
    correlations, clipped to [-1, 1].
    """
    r = np.asarray(rhos, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise ValueError("aggregate_across_units needs at least 2 unit correlations")
    m = len(r)
    mean = float(r.mean())
    sd = float(r.std(ddof=1))
    half = float(sps.t.ppf(0.975, m - 1)) * sd / np.sqrt(m)
    lo = max(-1.0, mean - half)
    hi = min(1.0, mean + half)
    return mean, lo, hi


def binomial_tail(k: int, n: int) -> float:
    """Exact one-sided sign-test tail P(X >= k) for X ~ Binomial(n, 1/2).

    Computed by integer enumeration of binomial coefficients, so the result
    is the correctly rounded float of an exact rational.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not (0 <= k <= n):
        raise ValueError("k must lie in [0, n]")
    numerator = sum(comb(n, i) for i in range(k, n + 1))
    return float(Fraction(numerator, 2**n))


@dataclass(frozen=True)
class SignTestResult:
    """Wins out of comparable trials with the exact tail probability."""

    wins: int
    trials: int
    p_value: float

    def __post_init__(self):
        if not (0 <= self.wins <= self.trials):
            raise ValueError("wins must lie in [0, trials]")


def sign_test(wins: int, trials: int) -> SignTestResult:
    """Exact one-sided sign test; exclude tied comparisons from ``trials`` first."""
    return SignTestResult(wins=wins, trials=trials, p_value=binomial_tail(wins, trials))


ColumnKey = tuple[str, str]


@dataclass(frozen=True)
class ScoreCell:
    """A per-article average with the iteration count that survived parsing."""

    score: float
    effective_k: int

    def __post_init__(self):
        if not (SCORE_MIN <= self.score <= SCORE_MAX):
            raise ValueError(f"cell score {self.score} outside [{SCORE_MIN}, {SCORE_MAX}]")
        if self.effective_k < 1:
            raise ValueError("effective_k must be at least 1")


class ScoreMatrix:
    """Articles x (model, strategy) grid of averaged scores.

    Cells are either a :class:`ScoreCell` or absent. When ``configured_k``
    is given, no cell may claim more usable iterations than were run.
    """

    def __init__(self, configured_k: int | None = None):
        if configured_k is not None and configured_k < 1:
            raise ValueError("configured_k must be at least 1")
        self.configured_k = configured_k
        self.cells: dict[ColumnKey, dict[str, ScoreCell]] = {}

    def add_column(self, key: ColumnKey, column: dict[str, ScoreCell]) -> None:
        if key in self.cells:
            raise ValueError(f"column {key} already present")
        if self.configured_k is not None:
            for art_id, cell in column.items():
                if cell.effective_k > self.configured_k:
                    raise ValueError(
                        f"cell ({key}, {art_id!r}) claims {cell.effective_k} iterations, "
                        f"only {self.configured_k} configured"
                    )
        self.cells[key] = dict(column)

    @property
    def columns(self) -> list[ColumnKey]:
        return sorted(self.cells)

    def article_ids(self) -> list[str]:
        ids: set[str] = set()
        for column in self.cells.values():
            ids.update(column)
        return sorted(ids)

    def column_scores(self, key: ColumnKey) -> dict[str, float]:
        return {art_id: cell.score for art_id, cell in self.cells[key].items()}

    def cell_count(self) -> int:
        return sum(len(column) for column in self.cells.values())

    def subset(self, ids) -> "ScoreMatrix":
        wanted = set(ids)
        out = ScoreMatrix(self.configured_k)
        for key, column in self.cells.items():
            out.cells[key] = {i: c for i, c in column.items() if i in wanted}
        return out

    def complete_ids(self) -> list[str]:
        """Articles scored in every column."""
        if not self.cells:
            return []
        common: set[str] | None = None
        for column in self.cells.values():
            keys = set(column)
            common = keys if common is None else common & keys
        return sorted(common or ())

    def paired_with_gold(self, key: ColumnKey, gold_scores: dict[str, float]):
        """Aligned (model, gold) vectors over articles present in both."""
        column = self.cells[key]
        ids = sorted(set(column) & set(gold_scores))
        x = np.array([column[i].score for i in ids], dtype=float)
        y = np.array([gold_scores[i] for i in ids], dtype=float)
        return ids, x, y


def mean_over_iterations(records) -> dict[str, ScoreCell]:
    """Average effective scores per article over one column's records.

    Only records with ok status, an effective score, and no multi-article
    flag contribute. Articles with nothing usable get no cell.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for rec in records:
        if rec.status != STATUS_OK or rec.effective is None:
            continue
        sums[rec.article_id] = sums.get(rec.article_id, 0.0) + rec.effective
        counts[rec.article_id] = counts.get(rec.article_id, 0) + 1
    return {
        art_id: ScoreCell(score=sums[art_id] / counts[art_id], effective_k=counts[art_id])
        for art_id in sums
    }
