"""Negative-unlabeled indexing toolkit.

Builds integer symptom indexes for a latent post-infection condition from
infection pseudo-labels: exact identification theory, synthetic cohort
generation with dependent binary features, weighted Lasso-penalized
logistic regression, index scoring, evaluation metrics, and a simulation
harness with a command-line front end.
"""

__version__ = "0.1.0"

from . import datagen, harness, index, metrics, penalized_glm, theory
from .errors import (
    ConstantFeatureWarning,
    ConvergenceError,
    DegenerateMarginError,
    DegenerateStratumError,
    DomainError,
    FoldError,
    InfeasibleDesignError,
    NuindexError,
    SchemaError,
    SeparationError,
    SingleClassError,
)

__all__ = [
    "__version__",
    "theory",
    "datagen",
    "penalized_glm",
    "index",
    "metrics",
    "harness",
    "NuindexError",
    "DomainError",
    "InfeasibleDesignError",
    "DegenerateMarginError",
    "DegenerateStratumError",
    "SchemaError",
    "ConvergenceError",
    "SeparationError",
    "FoldError",
    "SingleClassError",
    "ConstantFeatureWarning",
]
