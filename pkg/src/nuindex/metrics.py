"""Selection and discrimination metrics, plus the cross-validated curve.

Selection metrics compare the support of an estimated coefficient vector
against the features' true risk ratios. Discrimination metrics (AUC,
average precision, a tie-corrected Wilcoxon z) grade how well a score
separates latent-condition cases from the rest. The threshold-curve
machinery reads off, for each score cutoff, the classification rate among
the infected and among the uninfected, including the paper-style
cross-validated variant that refits the whole pipeline per fold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import kendalltau, rankdata

from .datagen import Cohort
from .errors import DomainError, SingleClassError
from .index import build_index_model, score
from .penalized_glm import compute_balancing_weights, cv_fit, stratified_folds

__all__ = [
    "SelectionReport",
    "ThresholdCurve",
    "PipelineConfig",
    "selection_metrics",
    "kendall_tau",
    "auc",
    "aucpr",
    "wilcoxon_statistic",
    "threshold_curve",
    "cv_threshold_curve",
]


@dataclass(frozen=True)
class SelectionReport:
    """Support-recovery summary of one fitted coefficient vector.

    tpr counts truly associated features (risk ratio away from 1) that
    were selected; tnr counts truly null features that were dropped;
    kendall_tau rank-correlates estimates with the true risk ratios and is
    NaN when the estimates are constant (no ranking exists).
    """

    n_selected: int
    tpr: float
    tnr: float
    kendall_tau: float


def _check_labels(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape or scores.size == 0:
        raise DomainError("scores and labels must be equal-length, nonempty")
    if not np.isin(labels, (0, 1)).all():
        raise DomainError("labels must be binary 0/1")
    return scores, labels.astype(np.int8)


def selection_metrics(
    estimated: np.ndarray,
    true_beta1: np.ndarray,
    allow_empty_class: bool = False,
) -> SelectionReport:
    """TPR/TNR/size of the selected support against the true risk ratios.

    A feature is truly associated when its risk ratio differs from 1 and
    selected when its estimate is nonzero. A truth vector with no
    associated or no null features leaves the corresponding rate 0/0;
    that raises DomainError unless ``allow_empty_class`` is set, in which
    case the undefined rate is reported as NaN (useful for pure-null
    study scenarios where only TNR exists).
    """
    estimated = np.asarray(estimated, dtype=float).ravel()
    true_beta1 = np.asarray(true_beta1, dtype=float).ravel()
    if estimated.shape != true_beta1.shape or estimated.size == 0:
        raise DomainError("estimated and true_beta1 must be equal-length, nonempty")
    assoc = true_beta1 != 1.0
    sel = estimated != 0.0
    if not allow_empty_class and (not assoc.any() or assoc.all()):
        raise DomainError(
            "true_beta1 must contain both associated and null features"
        )
    tau = math.nan
    if np.unique(estimated).size > 1 and np.unique(true_beta1).size > 1:
        tau = kendall_tau(estimated, true_beta1)
    tpr = float((sel & assoc).sum() / assoc.sum()) if assoc.any() else math.nan
    tnr = (
        float((~sel & ~assoc).sum() / (~assoc).sum()) if not assoc.all() else math.nan
    )
    return SelectionReport(
        n_selected=int(sel.sum()),
        tpr=tpr,
        tnr=tnr,
        kendall_tau=tau,
    )


def kendall_tau(estimated: np.ndarray, truth: np.ndarray) -> float:
    """Tie-adjusted Kendall rank correlation (the tau-b variant).

    Ties are pervasive here because penalized estimates are exactly zero
    in bulk, so the tie-adjusted denominator matters. Constant input has
    no ranking; that raises DomainError rather than returning NaN.
    """
    estimated = np.asarray(estimated, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if estimated.shape != truth.shape or estimated.size < 2:
        raise DomainError("inputs must be equal-length vectors of length >= 2")
    if np.unique(estimated).size < 2 or np.unique(truth).size < 2:
        raise DomainError("kendall_tau is undefined for constant input")
    return float(kendalltau(estimated, truth).statistic)


def _rank_u(scores, labels):
    """Mann-Whitney U of the positives, from midranks."""
    ranks = rankdata(scores)
    n1 = int(labels.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise SingleClassError("both classes are required")
    u = float(ranks[labels == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u, n1, n0


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative, ties half."""
    scores, labels = _check_labels(scores, labels)
    u, n1, n0 = _rank_u(scores, labels)
    return u / (n1 * n0)


def aucpr(scores: np.ndarray, labels: np.ndarray) -> float:
    """Average precision: sum of precision times recall increment.

    Thresholds descend through the distinct score values with ties grouped,
    so the result is the step-interpolated area under the precision-recall
    curve. Requires at least one positive.
    """
    scores, labels = _check_labels(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise SingleClassError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # Block boundaries where the score strictly drops: each block is one
    # distinct threshold.
    boundary = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    ends = np.append(boundary, sorted_labels.size - 1)
    tp = np.cumsum(sorted_labels)[ends].astype(float)
    seen = ends + 1.0
    precision = tp / seen
    recall = tp / n_pos
    return float(np.sum(np.diff(recall, prepend=0.0) * precision))


def wilcoxon_statistic(scores: np.ndarray, labels: np.ndarray) -> float:
    """Standardized Wilcoxon rank-sum statistic with tie correction.

    z = (U - n1*n0/2) / sigma, where U is the Mann-Whitney statistic of
    the positives and sigma uses the tied-group variance correction. When
    every score is identical there is no evidence either way and z is 0.
    """
    scores, labels = _check_labels(scores, labels)
    u, n1, n0 = _rank_u(scores, labels)
    n = n1 + n0
    _, counts = np.unique(scores, return_counts=True)
    tie_term = float((counts.astype(float) ** 3 - counts).sum())
    variance = n1 * n0 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    if variance <= 0.0:
        return 0.0
    return (u - n1 * n0 / 2.0) / math.sqrt(variance)


@dataclass
class ThresholdCurve:
    """Classification rates by score threshold, split by infection.

    ``rate_infected[i]`` and ``rate_uninfected[i]`` are the fractions of
    each group scoring at or above ``thresholds[i]``. Sentinel thresholds
    at minus and plus infinity pin the endpoints (1,1) and (0,0). Curves
    from a cross-validated run also carry ``fold_curves``, a fold-averaged
    ``mean_curve`` interpolated onto a fixed grid of infected rates (its
    thresholds are NaN because averaging crosses thresholds), and the
    ``heldout_scores`` behind the pooled curve.
    """

    thresholds: np.ndarray
    rate_infected: np.ndarray
    rate_uninfected: np.ndarray
    fold_curves: tuple["ThresholdCurve", ...] | None = None
    mean_curve: "ThresholdCurve | None" = None
    heldout_scores: np.ndarray | None = None

    def rate_uninfected_at(self, target_infected_rate: float) -> float:
        """Uninfected rate at the smallest achievable infected rate >= target.

        Among thresholds achieving that infected rate the highest one is
        used, matching how a deployed cutoff would be chosen.
        """
        return float(
            _interp_uninfected(self, np.asarray([target_infected_rate]))[0]
        )


def threshold_curve(scores: np.ndarray, infected: np.ndarray) -> ThresholdCurve:
    """Rates of scoring at or above each threshold, by infection status."""
    scores, infected = _check_labels(scores, infected)
    s1 = np.sort(scores[infected == 1])
    s0 = np.sort(scores[infected == 0])
    if s1.size == 0 or s0.size == 0:
        raise SingleClassError("both infection classes are required")
    thresholds = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    rate1 = 1.0 - np.searchsorted(s1, thresholds, side="left") / s1.size
    rate0 = 1.0 - np.searchsorted(s0, thresholds, side="left") / s0.size
    return ThresholdCurve(
        thresholds=thresholds, rate_infected=rate1, rate_uninfected=rate0
    )


def _interp_uninfected(curve: ThresholdCurve, grid: np.ndarray) -> np.ndarray:
    """Stepwise-interpolated uninfected rate at given infected rates.

    For each target r, picks the last threshold whose infected rate is
    still >= r (rate_infected is nonincreasing along the curve) and
    returns its uninfected rate.
    """
    idx = np.searchsorted(-curve.rate_infected, -grid, side="right") - 1
    if np.any(idx < 0):
        raise DomainError("infected-rate grid exceeds the achievable range")
    return curve.rate_uninfected[idx]


_RATE_GRID = np.arange(1, 100) / 100.0


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for the fit pipeline: weights -> cv_fit -> index -> score.

    ``use_weights`` turns on stratum-balancing weights (requires stratum
    columns). ``folds`` is the inner cross-validation depth used to choose
    the penalty; the curve's outer folds are a separate argument.
    """

    use_weights: bool = False
    folds: int = 10
    n_lambda: int = 100
    min_ratio: float = 0.01
    rule: str = "one_se"
    loss: str = "deviance"
    seed: int = 0


def fit_index_pipeline(cohort: Cohort, config: PipelineConfig):
    """Run weights -> cv_fit -> integer index on a whole cohort.

    Returns (fit, model, weights); weights is None when balancing is off.
    """
    weights = compute_balancing_weights(cohort) if config.use_weights else None
    fit = cv_fit(
        cohort.features,
        cohort.infected,
        weights,
        folds=config.folds,
        rule=config.rule,
        n_lambda=config.n_lambda,
        min_ratio=config.min_ratio,
        seed=config.seed,
        ids=cohort.ids,
        loss=config.loss,
    )
    mode = "balancing" if config.use_weights else "unadjusted"
    model = build_index_model(fit, cohort.feature_names, weighting_mode=mode)
    return fit, model, weights


def cv_threshold_curve(
    cohort: Cohort,
    folds: int = 10,
    config: PipelineConfig | None = None,
) -> ThresholdCurve:
    """Honest threshold curve: every individual scored out of fold.

    Splits the cohort into ``folds`` infection-stratified folds; for each,
    the full pipeline (balancing weights when enabled, recomputed within
    the training portion; penalty selection by inner cross-validation;
    integer index) is fit on the rest and the held-out fold is scored.
    The returned curve pools all held-out scores; per-fold curves are
    attached for folds containing both classes, along with their pointwise
    average over the fixed infected-rate grid.
    """
    config = config or PipelineConfig()
    assign = stratified_folds(cohort.infected, folds, config.seed, cohort.ids)
    heldout = np.zeros(cohort.n, dtype=np.int64)
    fold_curves = []
    for f in range(folds):
        train = assign != f
        test = ~train
        _, model, _ = fit_index_pipeline(cohort.subset(train), config)
        fold_scores = score(model, cohort.features[test])
        heldout[test] = fold_scores
        fold_infected = cohort.infected[test]
        if 0 < fold_infected.sum() < fold_infected.size:
            fold_curves.append(threshold_curve(fold_scores, fold_infected))
    pooled = threshold_curve(heldout, cohort.infected)
    mean_curve = None
    if fold_curves:
        averaged = np.mean(
            [_interp_uninfected(c, _RATE_GRID) for c in fold_curves], axis=0
        )
        mean_curve = ThresholdCurve(
            thresholds=np.full(_RATE_GRID.size, np.nan),
            rate_infected=_RATE_GRID.copy(),
            rate_uninfected=averaged,
        )
    return replace(
        pooled,
        fold_curves=tuple(fold_curves),
        mean_curve=mean_curve,
        heldout_scores=heldout,
    )
