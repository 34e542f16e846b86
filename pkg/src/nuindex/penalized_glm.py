"""Weighted Lasso-penalized logistic regression on infection labels.

Fits, over a geometric grid of penalties, the minimizer of

    (1/W) * sum_i w_i * [log(1 + exp(eta_i)) - a_i * eta_i] + lambda * ||coef||_1

with eta_i = intercept + x_i . coef, W = sum_i w_i, the intercept left
unpenalized, and the binary features used exactly as recorded (no
standardization: integer-weight indexes need coefficients on the original
0/1 scale, so a deliberate design choice here is that columns are never
centered or scaled).

The solver is iteratively reweighted least squares with coordinate-wise
soft-thresholding over a growing working set: each outer step builds the
local weighted quadratic model, solves it by cyclic coordinate descent on
the active columns, step-halves against the true penalized objective (so
the objective is monotone to rounding error), then audits the full
gradient, recruiting any coordinate whose stationarity condition fails.
No fit is accepted until the complete Karush-Kuhn-Tucker system holds at
the returned point, so warm starts change arithmetic, never solutions.

Balancing weights live here too: within every stratum they rescale the
uninfected so their weighted count matches the infected count, the sample
analogue of the population reweighting used in the identification theory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import warnings

import numpy as np
from scipy.special import expit

from .datagen import Cohort
from .errors import (
    ConstantFeatureWarning,
    ConvergenceError,
    DegenerateStratumError,
    DomainError,
    FoldError,
    SeparationError,
    SingleClassError,
)

__all__ = [
    "LassoFit",
    "compute_balancing_weights",
    "lambda_path",
    "fit_at_lambda",
    "fit_lambda_path",
    "stratified_folds",
    "cv_fit",
]

_IRLS_FLOOR = 1e-6  # lower bound on p(1-p) in the exact-curvature model
_KKT_TOL = 2e-7  # stationarity certificate required to accept a fit
_MAX_OUTER = 2000  # outer quadratic-model steps per penalty value


def compute_balancing_weights(cohort: Cohort) -> np.ndarray:
    """Per-individual weights that balance infection within each stratum.

    Infected individuals get weight one. Uninfected individuals in stratum
    z get weight (infected count in z) / (uninfected count in z), so after
    weighting every stratum carries equal infected and uninfected mass.
    A cohort without stratum columns is a single stratum, so the weights
    just balance the two marginal class masses. Raises
    DegenerateStratumError when some stratum has no infected or no
    uninfected members, naming the stratum.
    """
    if cohort.z_values:
        codes, labels = cohort.stratum_codes()
    else:
        codes, labels = np.zeros(cohort.n, dtype=np.intp), ("all",)
    infected = cohort.infected.astype(bool)
    weights = np.ones(cohort.n)
    for code, label in enumerate(labels):
        mask = codes == code
        n1 = int(np.count_nonzero(mask & infected))
        n0 = int(np.count_nonzero(mask) - n1)
        if n1 == 0 or n0 == 0:
            raise DegenerateStratumError(
                f"stratum ({label}) has {n1} infected and {n0} uninfected; "
                "balancing weights are undefined"
            )
        weights[mask & ~infected] = n1 / n0
    return weights


def _validate_design(x, a, w):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("x must be an (n, K) matrix with n >= 2")
    if not np.isin(x, (0.0, 1.0)).all():
        raise DomainError("features must be binary 0/1")
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.shape[0] != x.shape[0] or not np.isin(a, (0.0, 1.0)).all():
        raise DomainError("labels must be a length-n binary vector")
    if a.min() == a.max():
        raise SingleClassError("labels contain a single class; nothing to fit")
    if w is None:
        w = np.ones(x.shape[0])
    else:
        w = np.asarray(w, dtype=np.float64).ravel()
        if w.shape[0] != x.shape[0]:
            raise DomainError("weights must have length n")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise DomainError("weights must be positive and finite")
    return x, a, w


def lambda_path(
    x: np.ndarray,
    a: np.ndarray,
    w: np.ndarray | None = None,
    n_lambda: int = 100,
    min_ratio: float = 0.01,
) -> np.ndarray:
    """Geometric penalty grid from the data-driven maximum downward.

    The head of the grid is the smallest penalty whose solution is the
    all-zero coefficient vector: lambda_max = max_k |sum_i w_i x_ik (a_i -
    abar)| / sum_i w_i with abar the weighted label mean. Constant feature
    columns carry no gradient information and are skipped with a
    ConstantFeatureWarning; if every column is constant there is no grid to
    build and a DomainError is raised. Doubling all weights changes
    nothing: only weight proportions matter.
    """
    x, a, w = _validate_design(x, a, w)
    if n_lambda < 2:
        raise DomainError(f"n_lambda must be at least 2, got {n_lambda!r}")
    if not 0.0 < min_ratio < 1.0:
        raise DomainError(f"min_ratio must lie in (0, 1), got {min_ratio!r}")
    wn = w / w.sum()
    abar = wn @ a
    scores = np.abs(x.T @ (wn * (a - abar)))
    col_min = x.min(axis=0)
    constant = col_min == x.max(axis=0)
    if constant.any():
        warnings.warn(
            f"{int(constant.sum())} constant feature column(s) excluded "
            "from the penalty-grid computation",
            ConstantFeatureWarning,
            stacklevel=2,
        )
    usable = scores[~constant]
    if usable.size == 0:
        raise DomainError("all feature columns are constant")
    lam_max = float(usable.max())
    if lam_max <= 0.0:
        raise DomainError("labels are orthogonal to every feature; no grid")
    exponents = np.arange(n_lambda) / (n_lambda - 1)
    return lam_max * min_ratio**exponents


def _objective(eta, a, wn, lam, coef):
    nll = wn @ (np.logaddexp(0.0, eta) - a * eta)
    return float(nll + lam * np.abs(coef).sum())


# How far fitted probabilities may drift (sup norm) before the quadratic
# model's curvature is rebuilt. Stale curvature never changes what gets
# accepted (the gradient audit below is exact); it only trades Gram
# rebuilds against extra outer steps.
_CURVATURE_DRIFT = 0.01


class _Workspace:
    """Validated design shared across the fits of one path.

    Holds the design plus a one-slot cache of the quadratic model built
    from the active columns with curvature frozen at a recent probability
    snapshot. Consecutive warm-started fits reuse one active set and move
    the probabilities very little, so the column gather and the weighted
    Gram matrix are paid once per neighborhood, not once per step.
    """

    __slots__ = ("x", "a", "wn", "_act_key", "_act_cols", "_quad")

    def __init__(self, x, a, wn):
        self.x = x
        self.a = a
        self.wn = wn
        self._act_key = None
        self._act_cols = None
        self._quad = None

    def active_columns(self, act: tuple) -> np.ndarray:
        if act != self._act_key:
            self._act_key = act
            self._act_cols = np.ascontiguousarray(self.x[:, list(act)])
        return self._act_cols

    def quadratic(self, act: tuple, p: np.ndarray, fresh: bool):
        """Curvature pieces (xa, xo, gram, h, sw, omega, s) at ``act``.

        Reuses the cached model while the active set matches and ``p``
        stays within _CURVATURE_DRIFT of the snapshot; ``fresh`` forces a
        rebuild at the current probabilities.
        """
        quad = self._quad
        if (
            not fresh
            and quad is not None
            and quad["act"] == act
            and float(np.max(np.abs(p - quad["p"]))) <= _CURVATURE_DRIFT
        ):
            return quad
        xa = self.active_columns(act)
        s = np.maximum(p * (1.0 - p), _IRLS_FLOOR)
        omega = self.wn * s
        xo = xa * omega[:, None]
        quad = {
            "act": act,
            "p": p,
            "s": s,
            "omega": omega,
            "xa": xa,
            "xo": xo,
            "gram": xa.T @ xo,
            "h": xo.sum(axis=0),
            "sw": float(omega.sum()),
        }
        self._quad = quad
        return quad


def _cd_python(gram, c, h, sw, swz, lam, b0, bw, tol, max_sweeps):
    gvec = gram @ bw
    diag = gram.diagonal().copy()
    m = bw.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        b0_new = (swz - (h @ bw if m else 0.0)) / sw
        delta = abs(b0_new - b0)
        b0 = b0_new
        for j in range(m):
            if diag[j] <= 0.0:
                continue
            num = c[j] - b0 * h[j] - (gvec[j] - diag[j] * bw[j])
            mag = abs(num) - lam
            new = math.copysign(mag, num) / diag[j] if mag > 0.0 else 0.0
            if new != bw[j]:
                step = new - bw[j]
                gvec += gram[:, j] * step
                if abs(step) > delta:
                    delta = abs(step)
                bw[j] = new
        if delta < tol:
            break
    return b0, sweeps


def _cd_numba(gram, c, h, sw, swz, lam, b0, bw, tol, max_sweeps):  # pragma: no cover
    m = bw.shape[0]
    gvec = gram @ bw
    diag = np.empty(m)
    for j in range(m):
        diag[j] = gram[j, j]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        acc = 0.0
        for j in range(m):
            acc += h[j] * bw[j]
        b0_new = (swz - acc) / sw
        delta = abs(b0_new - b0)
        b0 = b0_new
        for j in range(m):
            if diag[j] <= 0.0:
                continue
            num = c[j] - b0 * h[j] - (gvec[j] - diag[j] * bw[j])
            mag = abs(num) - lam
            if mag > 0.0:
                new = mag / diag[j] if num > 0.0 else -mag / diag[j]
            else:
                new = 0.0
            if new != bw[j]:
                step = new - bw[j]
                for k in range(m):
                    gvec[k] += gram[k, j] * step
                if abs(step) > delta:
                    delta = abs(step)
                bw[j] = new
        if delta < tol:
            break
    return b0, sweeps


try:  # the compiled kernel is a drop-in speedup, never a requirement
    from numba import njit as _njit

    _cd_core = _njit(cache=True)(_cd_numba)
except ImportError:  # pragma: no cover
    _cd_core = _cd_python


def _cd_solve(quad, z, lam, b0, bw, tol, max_sweeps):
    """Solve the frozen-curvature quadratic; returns (b0, sweeps)."""
    c = quad["xo"].T @ z
    swz = float(quad["omega"] @ z)
    return _cd_core(
        quad["gram"], c, quad["h"], quad["sw"], swz, lam, b0, bw, tol, max_sweeps
    )


def _solve_one(ws: _Workspace, lam, b0, coef, tol, budget, intercept_cap, trace):
    """One penalty value to stationarity. Returns (b0, coef, sweeps used)."""
    x, a, wn = ws.x, ws.a, ws.wn
    coef = coef.copy()
    if lam == 0.0:
        # Nothing is thresholded out at lambda = 0; solve on all columns.
        active = tuple(range(x.shape[1]))
    else:
        active = tuple(int(k) for k in np.flatnonzero(coef != 0.0))
    if active:
        eta = b0 + ws.active_columns(active) @ coef[list(active)]
    else:
        eta = np.full(x.shape[0], float(b0))
    f_cur = _objective(eta, a, wn, lam, coef)
    if trace is not None:
        trace.append(f_cur)
    sweeps_left = budget
    fresh = False
    delta = np.inf
    for _ in range(_MAX_OUTER):
        p = expit(eta)
        quad = ws.quadratic(active, p, fresh)
        fresh = False
        # Working response against the frozen curvature; the residual is
        # exact, only the second-order weights may lag a little.
        z = eta + (a - p) / quad["s"]
        act = list(active)
        bw = coef[act]
        # The inner solve only needs to outpace the outer progress; the
        # closing steps run at full precision for the final certificate.
        inner_tol = min(tol, 1e-8) if delta < 1e-5 else min(1e-6, 0.02 * delta)
        b0_prop, used = _cd_solve(quad, z, lam, b0, bw, inner_tol, sweeps_left)
        sweeps_left -= used
        if sweeps_left <= 0:
            raise ConvergenceError(
                f"coordinate-sweep budget of {budget} exhausted at lambda={lam!r}"
            )
        coef_prop = coef.copy()
        coef_prop[act] = bw
        if act:
            eta_prop = b0_prop + quad["xa"] @ bw
        else:
            eta_prop = np.full(x.shape[0], float(b0_prop))
        # Step halving keeps the true penalized objective monotone when
        # the quadratic model oversteps; eta is affine in the parameters,
        # so fractional steps interpolate without another matvec.
        t = 1.0
        while True:
            if t == 1.0:
                b0_new, coef_new, eta_new = b0_prop, coef_prop, eta_prop
            else:
                b0_new = b0 + t * (b0_prop - b0)
                coef_new = coef + t * (coef_prop - coef)
                eta_new = eta + t * (eta_prop - eta)
            f_new = _objective(eta_new, a, wn, lam, coef_new)
            if f_new <= f_cur + 1e-12 or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            b0_new, coef_new, eta_new, f_new = b0, coef, eta, f_cur
        if t < 1.0:
            fresh = True  # the model overstepped; its curvature is stale
        delta = max(
            abs(b0_new - b0),
            float(np.max(np.abs(coef_new - coef))) if coef_new.size else 0.0,
        )
        b0, coef, eta, f_cur = b0_new, coef_new, eta_new, f_new
        if trace is not None:
            trace.append(f_cur)
        if abs(b0) > intercept_cap:
            raise SeparationError(
                f"intercept magnitude {abs(b0):.2f} exceeds the cap of "
                f"{intercept_cap:g}; the data look separable at lambda={lam!r}"
            )
        # Stationarity audit on the true gradient: recruit violators, and
        # only accept once the full KKT system holds at this point.
        p = expit(eta)
        grad = x.T @ (wn * (p - a))
        grad0 = float(wn @ (p - a))
        in_set = np.zeros(x.shape[1], dtype=bool)
        in_set[act] = True
        violations = np.flatnonzero(~in_set & (np.abs(grad) > lam + 1e-9))
        if violations.size:
            active = tuple(sorted(act + [int(v) for v in violations]))
            continue
        nonzero = coef != 0.0
        kkt = abs(grad0) <= _KKT_TOL
        kkt &= bool(np.all(np.abs(grad[~nonzero]) <= lam + _KKT_TOL))
        kkt &= bool(
            np.all(np.abs(grad[nonzero] + lam * np.sign(coef[nonzero])) <= _KKT_TOL)
        )
        if delta < tol:
            if kkt:
                return b0, coef, budget - sweeps_left
            # Stalled without a certificate: retry on fresh curvature.
            fresh = True
    raise ConvergenceError(
        f"no convergence after {_MAX_OUTER} outer steps at lambda={lam!r}"
    )


def fit_at_lambda(
    x: np.ndarray,
    a: np.ndarray,
    w: np.ndarray | None,
    lam: float,
    warm: tuple[float, np.ndarray] | None = None,
    tol: float = 1e-7,
    max_sweeps: int = 100_000,
    intercept_cap: float = 30.0,
    objective_trace: list | None = None,
) -> tuple[float, np.ndarray]:
    """Fit the penalized logistic model at one penalty value.

    Returns (intercept, coefficients). ``warm`` seeds the solver with a
    previous solution. ``objective_trace``, when a list is supplied,
    receives the accepted penalized objective after every outer step; the
    sequence never increases beyond rounding. Separation surfaces as
    SeparationError once the intercept passes ``intercept_cap``; an
    exhausted sweep budget raises ConvergenceError.
    """
    x, a, w = _validate_design(x, a, w)
    lam = float(lam)
    if not lam >= 0.0:
        raise DomainError(f"lambda must be nonnegative, got {lam!r}")
    wn = w / w.sum()
    ws = _Workspace(x, a, wn)
    if warm is None:
        abar = float(wn @ a)
        b0 = math.log(abar / (1.0 - abar))
        coef = np.zeros(x.shape[1])
    else:
        b0 = float(warm[0])
        coef = np.asarray(warm[1], dtype=np.float64).copy()
        if coef.shape != (x.shape[1],):
            raise DomainError("warm coefficients must have length K")
    b0, coef, _ = _solve_one(
        ws, lam, b0, coef, tol, max_sweeps, intercept_cap, objective_trace
    )
    return b0, coef


def _path_on_workspace(ws, lambdas, tol, max_sweeps, intercept_cap):
    abar = float(ws.wn @ ws.a)
    b0 = math.log(abar / (1.0 - abar))
    coef = np.zeros(ws.x.shape[1])
    intercepts = np.empty(lambdas.size)
    coefs = np.empty((lambdas.size, ws.x.shape[1]))
    for i, lam in enumerate(lambdas):
        b0, coef, _ = _solve_one(
            ws, float(lam), b0, coef, tol, max_sweeps, intercept_cap, None
        )
        intercepts[i] = b0
        coefs[i] = coef
    return intercepts, coefs


def fit_lambda_path(
    x: np.ndarray,
    a: np.ndarray,
    w: np.ndarray | None,
    lambdas: np.ndarray,
    tol: float = 1e-7,
    max_sweeps: int = 100_000,
    intercept_cap: float = 30.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Warm-started fits along a descending penalty grid.

    Returns (intercepts, coefficients) of shapes (L,) and (L, K). Each
    penalty is solved to the same stationarity certificate as a cold
    start, so warm starting changes arithmetic, not the solution.
    """
    x, a, w = _validate_design(x, a, w)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise DomainError("lambdas must be a nonempty vector")
    if np.any(np.diff(lambdas) > 0.0):
        raise DomainError("lambdas must be nonincreasing")
    ws = _Workspace(x, a, w / w.sum())
    return _path_on_workspace(ws, lambdas, tol, max_sweeps, intercept_cap)


def stratified_folds(
    labels: np.ndarray,
    n_folds: int,
    seed: int,
    ids: np.ndarray | None = None,
) -> np.ndarray:
    """Label-stratified fold assignment, reproducible from (seed, ids).

    Within each label class, rows are ordered by id, shuffled by a stream
    derived from (seed, class), and dealt round-robin, so the fold an
    individual lands in depends only on the seed and the set of ids, not
    on row order. Requires every class to have at least ``n_folds``
    members so each fold keeps both classes.
    """
    labels = np.asarray(labels).ravel()
    n = labels.shape[0]
    if n_folds < 2:
        raise FoldError(f"need at least 2 folds, got {n_folds!r}")
    if ids is None:
        ids = np.arange(n)
    else:
        ids = np.asarray(ids)
        if ids.shape != (n,):
            raise FoldError("ids must be a length-n vector")
    assign = np.empty(n, dtype=np.intp)
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        if members.size < n_folds:
            raise FoldError(
                f"class {cls} has {members.size} members, fewer than "
                f"{n_folds} folds; every fold must keep both classes"
            )
        ordered = members[np.argsort(ids[members], kind="stable")]
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), cls)))
        shuffled = ordered[rng.permutation(ordered.size)]
        assign[shuffled] = np.arange(shuffled.size) % n_folds
    return assign


@dataclass(frozen=True)
class LassoFit:
    """Everything produced by one cross-validated path fit.

    Paths are indexed by ``lambdas`` (descending). ``cv_error`` and
    ``cv_se`` hold the cross-validation loss mean and its standard error
    across folds. ``lambda_min`` minimizes the CV error (largest penalty
    on ties); ``lambda_1se`` is the largest penalty whose error is within
    one standard error of that minimum. The final coefficients are the
    full-data path solution at the penalty chosen by ``rule``.
    """

    lambdas: np.ndarray
    intercept_path: np.ndarray
    coef_path: np.ndarray
    nonzero_path: np.ndarray
    cv_error: np.ndarray
    cv_se: np.ndarray
    lambda_min: float
    lambda_1se: float
    rule: str
    loss: str
    selected_lambda: float
    final_intercept: float
    final_coefficients: np.ndarray


def _pointwise_loss(probs, labels, loss):
    """Held-out loss per observation and lambda; probs has shape (n, L)."""
    if loss == "misclassification":
        wrong = (probs > 0.5) != (labels[:, None] == 1.0)
        return wrong.astype(np.float64)
    p = np.clip(probs, 1e-10, 1.0 - 1e-10)
    return -2.0 * (
        labels[:, None] * np.log(p) + (1.0 - labels[:, None]) * np.log1p(-p)
    )


def cv_fit(
    x: np.ndarray,
    a: np.ndarray,
    w: np.ndarray | None = None,
    folds: int = 10,
    rule: str = "one_se",
    n_lambda: int = 100,
    min_ratio: float = 0.01,
    seed: int = 0,
    ids: np.ndarray | None = None,
    loss: str = "deviance",
    tol: float = 1e-7,
) -> LassoFit:
    """Cross-validated Lasso path fit with deterministic folding.

    Builds the penalty grid from the full data, fits the full-data path,
    then refits the path on each of ``folds`` stratified training sets and
    scores the held-out part with ``loss``, weighted by ``w``. The error
    curve is the fold-mass-weighted mean of the per-fold losses and its
    error bar the matching weighted standard deviation over
    sqrt(folds - 1). ``rule`` selects the final penalty: "one_se"
    (default) or "min".

    ``loss`` is "deviance" (binomial deviance, the default) or
    "misclassification" (predict infection when the fitted probability
    exceeds one half). Beware the latter with a dominant class: when no
    model on the path pushes any fitted probability across one half, its
    curve is exactly flat in the penalty and both selection rules return
    the empty model; deviance is the default because it stays informative
    there.
    """
    if rule not in ("one_se", "min"):
        raise DomainError(f"rule must be 'one_se' or 'min', got {rule!r}")
    if loss not in ("deviance", "misclassification"):
        raise DomainError(
            f"loss must be 'deviance' or 'misclassification', got {loss!r}"
        )
    x, a, w = _validate_design(x, a, w)
    lambdas = lambda_path(x, a, w, n_lambda=n_lambda, min_ratio=min_ratio)
    ws = _Workspace(x, a, w / w.sum())
    intercepts, coefs = _path_on_workspace(ws, lambdas, tol, 100_000, 30.0)
    assign = stratified_folds(a, folds, seed, ids)
    # Fold-level weighted mean losses; the curve is their fold-weighted
    # mean and the error bar is the fold-weighted standard deviation over
    # sqrt(folds - 1), so unequal fold masses are accounted for.
    fold_means = np.empty((folds, lambdas.size))
    fold_mass = np.empty(folds)
    for f in range(folds):
        train = assign != f
        test = ~train
        wtr = w[train]
        ws_f = _Workspace(
            np.ascontiguousarray(x[train]), a[train], wtr / wtr.sum()
        )
        f_int, f_coef = _path_on_workspace(ws_f, lambdas, tol, 100_000, 30.0)
        probs = expit(f_int[None, :] + x[test] @ f_coef.T)
        wte = w[test]
        fold_mass[f] = wte.sum()
        fold_means[f] = wte @ _pointwise_loss(probs, a[test], loss) / fold_mass[f]
    fw = fold_mass / fold_mass.sum()
    mean_error = fw @ fold_means
    se_error = np.sqrt(fw @ (fold_means - mean_error) ** 2 / (folds - 1))
    i_min = int(np.argmin(mean_error))  # first hit = largest penalty on ties
    i_1se = int(np.argmax(mean_error <= mean_error[i_min] + se_error[i_min]))
    chosen = i_1se if rule == "one_se" else i_min
    return LassoFit(
        lambdas=lambdas,
        intercept_path=intercepts,
        coef_path=coefs,
        nonzero_path=np.count_nonzero(coefs, axis=1),
        cv_error=mean_error,
        cv_se=se_error,
        lambda_min=float(lambdas[i_min]),
        lambda_1se=float(lambdas[i_1se]),
        rule=rule,
        loss=loss,
        selected_lambda=float(lambdas[chosen]),
        final_intercept=float(intercepts[chosen]),
        final_coefficients=coefs[chosen].copy(),
    )
