"""Exception and warning types shared across the toolkit.

Every error raised on purpose by this package derives from NuindexError so
callers can catch toolkit failures without swallowing unrelated bugs.
"""

from __future__ import annotations

__all__ = [
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


class NuindexError(Exception):
    """Base class for all toolkit errors."""


class DomainError(NuindexError, ValueError):
    """A parameter lies outside its admissible domain."""


class InfeasibleDesignError(DomainError):
    """A requested design implies a probability outside (0, 1)."""


class DegenerateMarginError(NuindexError, ValueError):
    """A contingency-table margin needed for an odds ratio has mass zero."""


class DegenerateStratumError(NuindexError, ValueError):
    """A stratum contains only infected or only uninfected individuals."""


class SchemaError(NuindexError, ValueError):
    """A data file violates the documented cohort or artifact schema."""


class ConvergenceError(NuindexError, RuntimeError):
    """The iterative solver exhausted its budget without converging."""


class SeparationError(ConvergenceError):
    """The fit diverged in a way consistent with (quasi-)separation."""


class FoldError(NuindexError, ValueError):
    """Cross-validation folds cannot be built as requested."""


class SingleClassError(NuindexError, ValueError):
    """A metric needs both classes but the data contain only one."""


class ConstantFeatureWarning(UserWarning):
    """A feature column is constant and carries no information."""
