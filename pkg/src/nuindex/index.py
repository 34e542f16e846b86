"""Integer index construction from fitted coefficients.

A deployable index must be computable by hand, so each raw coefficient is
rounded to the nearest tenth and scaled by ten, giving one small integer
weight per feature. Rounding is done in decimal arithmetic with half-ties
away from zero, so a coefficient printed as 0.05 contributes weight 1
regardless of its binary representation. Negative coefficients keep their
sign: a feature can subtract from the index.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import DomainError
from .penalized_glm import LassoFit

__all__ = ["IndexModel", "integer_weight", "build_index_model", "score", "symptom_count"]


def integer_weight(coefficient: float) -> int:
    """Round a raw coefficient to the nearest tenth, scaled by ten.

    Ties round away from zero: 0.05 -> 1 and -0.05 -> -1. The computation
    goes through the shortest decimal representation of the float so values
    that print as exact hundredths behave as users expect.
    """
    coefficient = float(coefficient)
    if not np.isfinite(coefficient):
        raise DomainError(f"coefficient must be finite, got {coefficient!r}")
    tenth = Decimal(repr(coefficient)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return int(tenth.scaleb(1))


@dataclass(frozen=True)
class IndexModel:
    """Integer scoring weights plus the raw coefficients they came from.

    ``selected_lambda`` and ``weighting_mode`` record how the fit behind
    the weights was produced.
    """

    weights: np.ndarray
    raw_coefficients: np.ndarray
    feature_names: tuple[str, ...]
    selected_lambda: float | None = None
    weighting_mode: str | None = None

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.int64)
        raw = np.asarray(self.raw_coefficients, dtype=float)
        if weights.shape != raw.shape or weights.ndim != 1:
            raise DomainError("weights and raw_coefficients must be equal-length vectors")
        if len(self.feature_names) != weights.shape[0]:
            raise DomainError("feature_names must match the weight count")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "raw_coefficients", raw)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))


def build_index_model(
    fit: LassoFit,
    feature_names: tuple[str, ...] | None = None,
    weighting_mode: str = "unadjusted",
) -> IndexModel:
    """Turn a cross-validated fit into integer index weights."""
    raw = fit.final_coefficients
    if feature_names is None:
        feature_names = tuple(f"x_{j + 1}" for j in range(raw.shape[0]))
    weights = np.array([integer_weight(c) for c in raw], dtype=np.int64)
    return IndexModel(
        weights=weights,
        raw_coefficients=raw.copy(),
        feature_names=feature_names,
        selected_lambda=fit.selected_lambda,
        weighting_mode=weighting_mode,
    )


def score(model: IndexModel, features: np.ndarray) -> np.ndarray:
    """Integer index value for each row of a binary feature matrix."""
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] != model.weights.shape[0]:
        raise DomainError(
            f"features must be (n, {model.weights.shape[0]}), got {features.shape}"
        )
    if not np.isin(features, (0, 1)).all():
        raise DomainError("features must be binary 0/1")
    return features.astype(np.int64) @ model.weights


def symptom_count(features: np.ndarray) -> np.ndarray:
    """Unweighted count of present features per row, the naive comparator."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise DomainError("features must be an (n, K) matrix")
    if not np.isin(features, (0, 1)).all():
        raise DomainError("features must be binary 0/1")
    return features.astype(np.int64).sum(axis=1)
