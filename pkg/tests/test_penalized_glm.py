"""Penalized logistic solver: closed forms, a grid oracle, KKT audits.

The independent oracles: a saturated 2x2 table (unpenalized single-feature
log odds ratio), a brute-force profiled-intercept grid search over the two
coefficients of a K=2 penalized fit, and direct evaluation of the
stationarity conditions at every path point. None of them share code with
the solver.
"""

import math

import numpy as np
import pytest
from scipy.special import expit

from nuindex.datagen import Cohort
from nuindex.errors import (
    ConstantFeatureWarning,
    ConvergenceError,
    DegenerateStratumError,
    DomainError,
    FoldError,
    SeparationError,
    SingleClassError,
)
from nuindex.penalized_glm import (
    compute_balancing_weights,
    cv_fit,
    fit_at_lambda,
    fit_lambda_path,
    lambda_path,
    stratified_folds,
)


def rng_cohort(n, k, seed, signal=None, alpha=0.7):
    """Simple synthetic design: independent binary features, logistic labels."""
    rng = np.random.default_rng(seed)
    x = (rng.random((n, k)) < 0.3).astype(float)
    beta = np.zeros(k) if signal is None else np.asarray(signal, dtype=float)
    eta = math.log(alpha / (1 - alpha)) + x @ beta
    a = (rng.random(n) < expit(eta)).astype(float)
    return x, a


def penalized_objective(x, a, w, intercept, coef, lam):
    w = np.ones(x.shape[0]) if w is None else np.asarray(w, dtype=float)
    wn = w / w.sum()
    eta = intercept + x @ coef
    nll = wn @ (np.logaddexp(0.0, eta) - a * eta)
    return float(nll + lam * np.abs(coef).sum())


# ------------------------------------------------------------ lambda path


def test_lambda_path_geometry_and_head():
    x, a = rng_cohort(500, 6, seed=1, signal=[0.8, 0, 0, 0, 0.5, 0])
    lams = lambda_path(x, a, n_lambda=50, min_ratio=0.01)
    assert lams.shape == (50,)
    ratios = lams[1:] / lams[:-1]
    assert np.allclose(ratios, 0.01 ** (1.0 / 49.0), rtol=1e-12)
    # head is the smallest penalty with an all-zero solution
    abar = a.mean()
    assert lams[0] == pytest.approx(np.abs(x.T @ (a - abar)).max() / x.shape[0])


def test_lambda_path_weight_scale_invariance():
    x, a = rng_cohort(300, 4, seed=2)
    w = np.random.default_rng(3).uniform(0.5, 2.0, 300)
    assert np.allclose(lambda_path(x, a, w), lambda_path(x, a, 3.0 * w))


def test_lambda_path_constant_column_warns():
    x, a = rng_cohort(200, 3, seed=4)
    x[:, 1] = 1.0
    with pytest.warns(ConstantFeatureWarning):
        lams = lambda_path(x, a)
    assert lams[0] > 0.0
    with pytest.raises(DomainError, match="constant"):
        with pytest.warns(ConstantFeatureWarning):
            lambda_path(np.ones((100, 2)), a[:100])


# ------------------------------------------------------------ closed forms


def test_at_lambda_max_model_is_zero_with_closed_form_intercept():
    x, a = rng_cohort(400, 5, seed=5, signal=[0.7, 0, 0.4, 0, 0])
    w = np.random.default_rng(6).uniform(0.5, 3.0, 400)
    lams = lambda_path(x, a, w)
    for lam in (lams[0], 1.5 * lams[0]):
        intercept, coef = fit_at_lambda(x, a, w, lam)
        assert np.all(coef == 0.0)
        abar = (w / w.sum()) @ a
        assert abs(intercept - math.log(abar / (1.0 - abar))) < 1e-10


def test_unpenalized_single_feature_matches_two_by_two_log_odds_ratio():
    # cell counts (x, a): (1,1)=30 (1,0)=20 (0,1)=40 (0,0)=60
    # odds ratio = (30/20)/(40/60) = 2.25
    x = np.array([[1.0]] * 50 + [[0.0]] * 100)
    a = np.array([1.0] * 30 + [0.0] * 20 + [1.0] * 40 + [0.0] * 60)
    intercept, coef = fit_at_lambda(x, a, None, 0.0)
    assert abs(coef[0] - math.log(2.25)) < 1e-6
    assert abs(intercept - math.log(40.0 / 60.0)) < 1e-6


def grid_oracle_objective(x, a, lam, span=1.2, coarse=0.02, fine=0.001):
    """Profiled-intercept exhaustive search over two coefficients.

    Works on the four distinct rows of a binary two-column design, so the
    whole grid is vectorized; the intercept is profiled out by Newton
    iterations on the strictly convex one-dimensional problem.
    """
    patterns = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    n = x.shape[0]
    counts = np.zeros((4, 2))
    for row, lab in zip(x, a):
        counts[int(row[0]) * 2 + int(row[1]), int(lab)] += 1.0
    wn = counts / n  # mass of (pattern, label)
    mass = wn.sum(axis=1)
    pos = wn[:, 1]

    def best_over(b1s, b2s):
        b1g, b2g = np.meshgrid(b1s, b2s, indexing="ij")
        t = (
            patterns[:, 0][:, None, None] * b1g[None]
            + patterns[:, 1][:, None, None] * b2g[None]
        )
        b0 = np.zeros_like(b1g)
        for _ in range(60):
            p = expit(b0[None] + t)
            g = (mass[:, None, None] * p - pos[:, None, None]).sum(axis=0)
            h = (mass[:, None, None] * p * (1.0 - p)).sum(axis=0)
            step = g / np.maximum(h, 1e-12)
            b0 -= step
            if np.max(np.abs(step)) < 1e-13:
                break
        eta = b0[None] + t
        nll = (
            mass[:, None, None] * np.logaddexp(0.0, eta)
            - pos[:, None, None] * eta
        ).sum(axis=0)
        obj = nll + lam * (np.abs(b1g) + np.abs(b2g))
        flat = int(np.argmin(obj))
        i, j = np.unravel_index(flat, obj.shape)
        return float(obj[i, j]), float(b1s[i]), float(b2s[j])

    steps = int(round(2 * span / coarse))
    _, c1, c2 = best_over(
        np.linspace(-span, span, steps + 1), np.linspace(-span, span, steps + 1)
    )
    radius = 1.5 * coarse
    m = int(round(2 * radius / fine))
    best, _, _ = best_over(
        c1 + np.linspace(-radius, radius, m + 1),
        c2 + np.linspace(-radius, radius, m + 1),
    )
    return best


def test_two_feature_objective_matches_grid_search_oracle():
    rng = np.random.default_rng(42)
    x = (rng.random((200, 2)) < np.array([0.35, 0.25])).astype(float)
    eta = -0.4 + 0.9 * x[:, 0] - 0.6 * x[:, 1]
    a = (rng.random(200) < expit(eta)).astype(float)
    lam = 0.05
    intercept, coef = fit_at_lambda(x, a, None, lam)
    solver_obj = penalized_objective(x, a, None, intercept, coef, lam)
    oracle_obj = grid_oracle_objective(x, a, lam)
    assert solver_obj <= oracle_obj + 1e-12  # never worse than any grid point
    assert abs(solver_obj - oracle_obj) < 1e-4


# ------------------------------------------------------------ KKT audits


def kkt_violation(x, a, w, lam, intercept, coef):
    """Max stationarity violation of the normalized penalized objective."""
    w = np.ones(x.shape[0]) if w is None else w
    wn = w / w.sum()
    p = expit(intercept + x @ coef)
    grad = x.T @ (wn * (p - a))
    worst = abs(float(wn @ (p - a)))  # unpenalized intercept
    for j, b in enumerate(coef):
        if b == 0.0:
            worst = max(worst, abs(grad[j]) - lam)
        else:
            worst = max(worst, abs(grad[j] + lam * math.copysign(1.0, b)))
    return worst


def test_kkt_holds_at_every_path_point():
    x, a = rng_cohort(600, 8, seed=7, signal=[0.9, -0.5, 0, 0, 0.6, 0, 0, 0])
    w = np.random.default_rng(8).uniform(0.5, 2.5, 600)
    lams = lambda_path(x, a, w, n_lambda=40)
    intercepts, coefs = fit_lambda_path(x, a, w, lams)
    assert coefs.shape == (40, 8)
    for i, lam in enumerate(lams):
        assert kkt_violation(x, a, w, lam, intercepts[i], coefs[i]) < 1e-6


def test_warm_and_cold_starts_agree():
    x, a = rng_cohort(500, 6, seed=9, signal=[0.8, 0, 0, -0.7, 0, 0.4])
    lams = lambda_path(x, a, n_lambda=25)
    _, coefs = fit_lambda_path(x, a, None, lams)
    lam = lams[18]
    cold_i, cold_c = fit_at_lambda(x, a, None, lam)
    warm_i, warm_c = fit_at_lambda(
        x, a, None, lam, warm=(float(cold_i) + 0.3, coefs[15].copy())
    )
    assert abs(cold_i - warm_i) < 1e-6
    assert np.max(np.abs(cold_c - warm_c)) < 1e-6


def test_objective_trace_is_monotone():
    x, a = rng_cohort(400, 5, seed=10, signal=[1.0, 0, 0.5, 0, 0])
    trace: list = []
    fit_at_lambda(x, a, None, 0.01, objective_trace=trace)
    assert len(trace) >= 1
    diffs = np.diff(np.asarray(trace))
    assert np.all(diffs <= 1e-12)


def test_fit_weight_scale_invariance():
    x, a = rng_cohort(300, 4, seed=11, signal=[0.8, 0, 0, 0])
    w = np.random.default_rng(12).uniform(0.5, 2.0, 300)
    i1, c1 = fit_at_lambda(x, a, w, 0.02)
    i2, c2 = fit_at_lambda(x, a, 5.0 * w, 0.02)
    assert abs(i1 - i2) < 1e-9
    assert np.max(np.abs(c1 - c2)) < 1e-9


def test_separable_data_never_converges():
    x = np.array([[1.0]] * 40 + [[0.0]] * 40)
    a = np.array([1.0] * 40 + [0.0] * 40)
    # a runaway intercept trips the cap and names the cause
    with pytest.raises(SeparationError, match="separable"):
        fit_at_lambda(x, a, None, 0.0, intercept_cap=8.0)
    # with a loose cap the sweep budget gives out instead; the specific
    # error is a subclass of the general convergence failure
    with pytest.raises(ConvergenceError):
        fit_at_lambda(x, a, None, 0.0)
    assert issubclass(SeparationError, ConvergenceError)


def test_design_validation_errors():
    x, a = rng_cohort(100, 3, seed=13)
    with pytest.raises(SingleClassError):
        fit_at_lambda(x, np.ones(100), None, 0.1)
    with pytest.raises(DomainError, match="binary"):
        fit_at_lambda(x + 0.5, a, None, 0.1)
    with pytest.raises(DomainError, match="weights"):
        fit_at_lambda(x, a, np.zeros(100), 0.1)
    with pytest.raises(DomainError, match="length"):
        fit_at_lambda(x, a, np.ones(99), 0.1)


# ------------------------------------------------------ balancing weights


def tiny_cohort(infected, z=None):
    n = len(infected)
    return Cohort(
        ids=np.arange(n),
        infected=np.asarray(infected),
        features=np.zeros((n, 2), dtype=np.int8),
        feature_names=("x_1", "x_2"),
        z_values=None if z is None else {"z": np.asarray(z)},
    )


def test_balancing_weights_per_stratum_ratio():
    # stratum 0: 3 infected / 2 uninfected; stratum 1: 1 infected / 4 uninfected
    infected = [1, 1, 1, 0, 0, 1, 0, 0, 0, 0]
    z = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
    w = compute_balancing_weights(tiny_cohort(infected, z))
    assert np.all(w[np.asarray(infected) == 1] == 1.0)
    assert w[3] == pytest.approx(1.5)
    assert w[6] == pytest.approx(0.25)
    # weighted class masses match within each stratum
    for value in (0, 1):
        rows = np.asarray(z) == value
        inf = rows & (np.asarray(infected) == 1)
        assert w[inf].sum() == pytest.approx(w[rows & ~inf].sum())


def test_balancing_weights_single_stratum_fallback():
    infected = [1, 1, 1, 0, 0, 0, 0, 0]
    w = compute_balancing_weights(tiny_cohort(infected))
    assert np.all(w[:3] == 1.0)
    assert np.allclose(w[3:], 3.0 / 5.0)


def test_balancing_weights_degenerate_stratum():
    with pytest.raises(DegenerateStratumError, match="z=1"):
        compute_balancing_weights(
            tiny_cohort([1, 0, 1, 1], [0, 0, 1, 1])
        )


# ----------------------------------------------------------------- folds


def test_folds_are_deterministic_and_permutation_invariant():
    rng = np.random.default_rng(14)
    labels = (rng.random(200) < 0.3).astype(int)
    ids = np.arange(1000, 1200)
    f1 = stratified_folds(labels, 5, seed=3, ids=ids)
    f2 = stratified_folds(labels, 5, seed=3, ids=ids)
    assert np.array_equal(f1, f2)

    perm = rng.permutation(200)
    f3 = stratified_folds(labels[perm], 5, seed=3, ids=ids[perm])
    # each id keeps its fold no matter the row order
    assert np.array_equal(f3, f1[perm])
    assert not np.array_equal(stratified_folds(labels, 5, seed=4, ids=ids), f1)


def test_folds_keep_both_classes():
    labels = np.array([1] * 12 + [0] * 38)
    assign = stratified_folds(labels, 10, seed=0)
    for f in range(10):
        fold_labels = labels[assign == f]
        assert 0 in fold_labels and 1 in fold_labels


def test_fold_errors():
    labels = np.array([1] * 4 + [0] * 30)
    with pytest.raises(FoldError, match="class 1"):
        stratified_folds(labels, 10, seed=0)
    with pytest.raises(FoldError, match="at least 2"):
        stratified_folds(labels, 1, seed=0)


# ------------------------------------------------------------------- cv


def test_cv_fit_structure_and_rules():
    x, a = rng_cohort(600, 6, seed=15, signal=[1.2, 0, 0, 0.8, 0, 0])
    fit = cv_fit(x, a, folds=5, n_lambda=40, seed=2)
    assert fit.lambdas.shape == (40,)
    assert np.all(np.diff(fit.lambdas) < 0)
    assert fit.cv_error.shape == (40,) and fit.cv_se.shape == (40,)
    assert fit.lambda_1se >= fit.lambda_min
    assert fit.rule == "one_se" and fit.selected_lambda == fit.lambda_1se
    assert fit.loss == "deviance"
    # the stored final model is the path model at the selected penalty
    sel = int(np.flatnonzero(fit.lambdas == fit.selected_lambda)[0])
    assert np.array_equal(fit.final_coefficients, fit.coef_path[sel])
    assert fit.nonzero_path[sel] == np.count_nonzero(fit.final_coefficients)

    fit_min = cv_fit(x, a, folds=5, n_lambda=40, seed=2, rule="min")
    assert fit_min.selected_lambda == fit_min.lambda_min
    assert fit_min.lambda_min <= fit.lambda_1se


def test_cv_fold_assignment_reproducible_via_ids():
    x, a = rng_cohort(400, 5, seed=16, signal=[1.0, 0, 0, 0, 0.6])
    ids = np.arange(400)
    fit1 = cv_fit(x, a, ids=ids, folds=5, n_lambda=30, seed=7)
    perm = np.random.default_rng(17).permutation(400)
    fit2 = cv_fit(x[perm], a[perm], ids=ids[perm], folds=5, n_lambda=30, seed=7)
    # row order only perturbs float summation order, so compare to rounding
    assert np.allclose(fit1.lambdas, fit2.lambdas, rtol=1e-12)
    assert np.allclose(fit1.cv_error, fit2.cv_error, atol=1e-10)
    sel1 = int(np.argmin(np.abs(fit1.lambdas - fit1.selected_lambda)))
    sel2 = int(np.argmin(np.abs(fit2.lambdas - fit2.selected_lambda)))
    assert sel1 == sel2
    assert np.allclose(fit1.final_coefficients, fit2.final_coefficients, atol=1e-9)


def test_misclassification_flat_curve_returns_empty_model():
    """With a dominant class every path model predicts the majority label,
    so the misclassification curve is flat and both rules land on the
    all-zero head of the path. The weighted fit rebalances the classes,
    making the same loss informative again."""
    rng = np.random.default_rng(18)
    n = 1200
    x = (rng.random((n, 4)) < 0.25).astype(float)
    eta = math.log(0.75 / 0.25) + x @ np.array([1.4, 1.1, 0.0, 0.0])
    a = (rng.random(n) < expit(eta)).astype(float)

    flat = cv_fit(x, a, folds=5, n_lambda=40, seed=3, loss="misclassification")
    assert np.count_nonzero(flat.final_coefficients) == 0
    assert np.allclose(flat.cv_error, flat.cv_error[0])

    cohort = Cohort(
        ids=np.arange(n),
        infected=a.astype(np.int8),
        features=x.astype(np.int8),
        feature_names=tuple(f"x_{j+1}" for j in range(4)),
    )
    w = compute_balancing_weights(cohort)
    informative = cv_fit(
        x, a, w, folds=5, n_lambda=40, seed=3, loss="misclassification"
    )
    assert np.count_nonzero(informative.final_coefficients) > 0
    assert informative.cv_error.min() < informative.cv_error[0] - 1e-6

    deviance = cv_fit(x, a, folds=5, n_lambda=40, seed=3)
    assert np.count_nonzero(deviance.final_coefficients) > 0


def test_cv_loss_and_rule_validation():
    x, a = rng_cohort(200, 3, seed=19)
    with pytest.raises(DomainError, match="rule"):
        cv_fit(x, a, rule="2se")
    with pytest.raises(DomainError, match="loss"):
        cv_fit(x, a, loss="auc")
