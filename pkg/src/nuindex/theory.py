"""Closed-form identification theory for a latent-condition symptom model.

The model has four primitives. An infection indicator A has prevalence
``alpha``. A latent condition Y occurs only after infection: P(Y=1 | A=1) =
``pi`` and P(Y=1 | A=0) = 0. A binary feature X (a symptom, a code, a lab
flag) depends on infection only through the latent condition:

    P(X=1 | Y=y) = beta0 * beta1**y,

so ``beta0`` is the background feature rate and ``beta1`` is the risk ratio
of the feature under the latent condition. Admissibility requires
0 < beta1 <= 1/beta0 so both conditional rates stay inside (0, 1].

Because Y is never observed, practitioners regress the observable A on X.
This module gives the exact value of that observable association, the odds
ratio between A and X, as a function of (pi, beta0, beta1):

    OR = 1 - pi*(1 - beta1) / (beta0*pi*(1 - beta1) + (1 - beta0)),

which notably does not involve alpha. The remaining functions characterize
how OR relates to the latent risk ratio beta1 (same side of 1, equality
threshold, attenuation regions) and extend the audit to designs with a
binary confounder Z that shifts both infection rates and feature rates,
where stratum-balancing weights restore the unconfounded association.

All probabilities are exact rational arithmetic in floating point; nothing
here is simulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from .errors import DegenerateMarginError, DomainError, InfeasibleDesignError

__all__ = [
    "TheoryPoint",
    "ConfounderDesign",
    "JointTable",
    "MagnitudeRelation",
    "or_closed_form",
    "infection_rate_given_feature",
    "equality_threshold",
    "magnitude_relation",
    "always_attenuated_region",
    "solve_conditional_from_marginal",
    "build_confounded_joint",
    "or_from_joint",
    "confounding_curve",
]

# Floating-point slack used for the beta0*beta1 <= 1 admissibility boundary.
_BOUNDARY_SLACK = 1e-12


def _check_open_unit(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {value!r}")
    return value


def _check_positive(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive real, got {value!r}")
    return value


@dataclass(frozen=True)
class TheoryPoint:
    """One admissible parameter point of the latent-condition model.

    alpha : infection prevalence P(A=1), in (0, 1)
    pi    : latent-condition rate among the infected P(Y=1 | A=1), in (0, 1)
    beta0 : background feature rate P(X=1 | Y=0), in (0, 1)
    beta1 : feature risk ratio P(X=1|Y=1) / P(X=1|Y=0), in (0, 1/beta0]
    """

    alpha: float
    pi: float
    beta0: float
    beta1: float

    def __post_init__(self) -> None:
        _check_open_unit(self.alpha, "alpha")
        _check_open_unit(self.pi, "pi")
        _check_open_unit(self.beta0, "beta0")
        _check_positive(self.beta1, "beta1")
        if self.beta0 * self.beta1 > 1.0 + _BOUNDARY_SLACK:
            raise DomainError(
                "beta1 must not exceed 1/beta0 (needs beta0*beta1 <= 1); "
                f"got beta0={self.beta0!r}, beta1={self.beta1!r}"
            )


class MagnitudeRelation(Enum):
    """How far the observable OR sits from the null relative to beta1."""

    OR_FARTHER = "or_farther"
    OR_CLOSER = "or_closer"
    EQUAL = "equal"


def or_closed_form(pt: TheoryPoint) -> float:
    """Exact infection-feature odds ratio implied by the latent model.

    OR = 1 - pi*(1-beta1) / (beta0*pi*(1-beta1) + (1-beta0)). The value is
    free of alpha: prevalence moves both P(A=1|X=1) and P(A=1|X=0) but their
    odds ratio is invariant. The denominator is strictly positive everywhere
    on the admissible domain, including the beta1 = 1/beta0 boundary.
    """
    num = pt.pi * (1.0 - pt.beta1)
    den = pt.beta0 * pt.pi * (1.0 - pt.beta1) + (1.0 - pt.beta0)
    return 1.0 - num / den


def infection_rate_given_feature(pt: TheoryPoint, alpha: float, x: int) -> float:
    """P(A=1 | X=x) under the latent model at infection prevalence ``alpha``.

    The prevalence is taken from the argument, not from ``pt``, so callers
    can sweep alpha at a fixed (pi, beta0, beta1) when checking that the
    odds ratio built from these two rates does not depend on it.
    """
    alpha = _check_open_unit(alpha, "alpha")
    if x not in (0, 1):
        raise DomainError(f"x must be 0 or 1, got {x!r}")
    pi, beta0, beta1 = pt.pi, pt.beta0, pt.beta1
    if x == 1:
        # P(X=1|A=1) = beta0*(pi*beta1 + 1 - pi), P(X=1|A=0) = beta0
        num = beta1 + (1.0 - pi) / pi
        den = beta1 + (1.0 - alpha * pi) / (alpha * pi)
        return num / den
    # X = 0: complementary rates, beta0 cancels only partially
    num = (1.0 - beta0 * beta1) * pi + (1.0 - beta0) * (1.0 - pi)
    den = (1.0 - beta0 * beta1) * pi + (1.0 - beta0) * (1.0 / alpha - pi)
    return num / den


def equality_threshold(pi: float, beta0: float) -> float:
    """Risk-ratio value at which the observable OR equals beta1 exactly.

    Returns phi = ((1-pi)/pi) * ((1-beta0)/beta0). Whenever phi <= 1/beta0
    the point beta1 = phi is admissible and is the unique non-trivial fixed
    point of beta1 -> OR(beta1); beta1 = 1 is always the trivial one. For
    beta1 strictly between 1 and phi the OR overshoots the risk ratio, and
    beyond phi it undershoots.
    """
    pi = _check_open_unit(pi, "pi")
    beta0 = _check_open_unit(beta0, "beta0")
    return ((1.0 - pi) / pi) * ((1.0 - beta0) / beta0)


def magnitude_relation(pt: TheoryPoint, rel_tol: float = 1e-9) -> MagnitudeRelation:
    """Compare |OR - 1| against |beta1 - 1| at one parameter point.

    Classifies whether the observable odds ratio exaggerates the latent
    risk ratio (OR_FARTHER), attenuates it toward the null (OR_CLOSER), or
    matches its distance from 1 exactly (EQUAL, up to ``rel_tol``). EQUAL
    occurs at beta1 = 1 and at beta1 = equality_threshold(pi, beta0).
    """
    d_rr = abs(pt.beta1 - 1.0)
    d_or = abs(or_closed_form(pt) - 1.0)
    if math.isclose(d_rr, d_or, rel_tol=rel_tol, abs_tol=1e-12):
        return MagnitudeRelation.EQUAL
    if d_or > d_rr:
        return MagnitudeRelation.OR_FARTHER
    return MagnitudeRelation.OR_CLOSER


def always_attenuated_region(pi: float, beta0: float) -> bool:
    """True when the OR understates every admissible harmful risk ratio.

    The region is beta0 < 1 - pi/(1-pi): there the equality threshold phi
    exceeds the admissible ceiling 1/beta0, so for every beta1 in (1, 1/beta0]
    the observable OR lies strictly between 1 and beta1 (attenuation toward
    the null). Any pi < 1/3 combined with beta0 < 1/2 lands in the region.
    Requires pi < 1/2 for the bound to be positive; points with pi >= 1/2
    are never in the region.
    """
    pi = _check_open_unit(pi, "pi")
    beta0 = _check_open_unit(beta0, "beta0")
    return beta0 < 1.0 - pi / (1.0 - pi)


def solve_conditional_from_marginal(
    marginal: float, pz: float, rr: float
) -> tuple[float, float]:
    """Split a marginal rate into per-stratum rates with a fixed ratio.

    Finds (p0, p1) with p1 = rr * p0 and (1-pz)*p0 + pz*p1 = marginal, i.e.
    p0 = marginal / (1 - pz + pz*rr). Raises InfeasibleDesignError when
    either stratum rate leaves (0, 1).
    """
    marginal = _check_open_unit(marginal, "marginal")
    pz = _check_open_unit(pz, "pz")
    rr = _check_positive(rr, "rr")
    p0 = marginal / ((1.0 - pz) + pz * rr)
    p1 = rr * p0
    for name, value in (("stratum-0 rate", p0), ("stratum-1 rate", p1)):
        if not 0.0 < value < 1.0:
            raise InfeasibleDesignError(
                f"marginal {marginal} with pz={pz}, rr={rr} forces {name} to "
                f"{value!r}, outside (0, 1)"
            )
    return p0, p1


@dataclass(frozen=True)
class ConfounderDesign:
    """Strength of a binary confounder Z in a four-variable design.

    pz    : P(Z=1), in (0, 1)
    rr_az : infection rate ratio P(A=1|Z=1) / P(A=1|Z=0), positive;
            values below 1 make Z protective for infection
    rr_xz : feature rate ratio P(X=1|Y=y,Z=1) / P(X=1|Y=y,Z=0), positive;
            1 means the feature ignores Z
    """

    pz: float
    rr_az: float
    rr_xz: float

    def __post_init__(self) -> None:
        _check_open_unit(self.pz, "pz")
        _check_positive(self.rr_az, "rr_az")
        _check_positive(self.rr_xz, "rr_xz")


@dataclass(frozen=True)
class JointTable:
    """Exact joint distribution of (Z, Y, A, X) on {0,1}^4.

    ``cells[z, y, a, x]`` is the probability of that outcome. Construction
    validates that the mass sums to one, that the latent condition never
    occurs without infection, and that P(Y=1 | A=1, Z=z) does not vary
    with z (the latent rate is a property of infection, not of the
    confounder).
    """

    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (2, 2, 2, 2):
            raise DomainError(f"cells must have shape (2,2,2,2), got {cells.shape}")
        if np.any(cells < 0.0):
            raise DomainError("cells must be nonnegative")
        total = float(cells.sum())
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"cells must sum to 1, got {total!r}")
        # No latent condition without infection: P(Y=1, A=0) = 0.
        if float(cells[:, 1, 0, :].sum()) > 0.0:
            raise DomainError("mass on Y=1, A=0 violates the latent model")
        rates = []
        for z in (0, 1):
            mass_a1 = float(cells[z, :, 1, :].sum())
            if mass_a1 > 0.0:
                rates.append(float(cells[z, 1, 1, :].sum()) / mass_a1)
        if len(rates) == 2 and abs(rates[0] - rates[1]) > 1e-12:
            raise DomainError(
                "P(Y=1 | A=1, Z=z) must not depend on z; "
                f"got {rates[0]!r} and {rates[1]!r}"
            )
        object.__setattr__(self, "cells", cells)

    def margin_ax(self) -> np.ndarray:
        """2x2 marginal table over (A, X)."""
        return self.cells.sum(axis=(0, 1))


def build_confounded_joint(
    alpha: float,
    pi: float,
    beta0: float,
    beta1: float,
    design: ConfounderDesign,
) -> JointTable:
    """Exact (Z, Y, A, X) joint for a confounded latent-condition design.

    Z is Bernoulli(pz). Infection and feature rates vary by stratum with
    the requested rate ratios while preserving the marginals:
    E_Z[P(A=1|Z)] = alpha and E_Z[P(X=1|Y=0,Z)] = beta0. The latent rate
    pi and the risk ratio beta1 are shared by both strata, so Z confounds
    the A-X association without touching the latent mechanism.
    """
    alpha = _check_open_unit(alpha, "alpha")
    pi = _check_open_unit(pi, "pi")
    beta0 = _check_open_unit(beta0, "beta0")
    beta1 = _check_positive(beta1, "beta1")
    a_by_z = solve_conditional_from_marginal(alpha, design.pz, design.rr_az)
    b_by_z = solve_conditional_from_marginal(beta0, design.pz, design.rr_xz)
    for z, b_z in enumerate(b_by_z):
        if b_z * beta1 > 1.0 + _BOUNDARY_SLACK:
            raise InfeasibleDesignError(
                f"stratum-{z} baseline rate {b_z} with beta1={beta1} forces "
                "P(X=1 | Y=1, Z) above 1"
            )
    cells = np.zeros((2, 2, 2, 2))
    for z in (0, 1):
        p_z = design.pz if z == 1 else 1.0 - design.pz
        p_a1 = a_by_z[z]
        for a in (0, 1):
            p_a = p_a1 if a == 1 else 1.0 - p_a1
            for y in (0, 1):
                p_y1 = pi if a == 1 else 0.0
                p_y = p_y1 if y == 1 else 1.0 - p_y1
                p_x1 = min(b_by_z[z] * beta1**y, 1.0)
                for x in (0, 1):
                    p_x = p_x1 if x == 1 else 1.0 - p_x1
                    cells[z, y, a, x] = p_z * p_a * p_y * p_x
    return JointTable(cells)


def or_from_joint(table: JointTable, weighted: bool = False) -> float:
    """Infection-feature odds ratio read off a joint table.

    With ``weighted=False`` this is the crude (unadjusted) odds ratio of the
    (A, X) margin. With ``weighted=True`` each stratum's uninfected mass is
    rescaled by P(A=1|Z=z)/P(A=0|Z=z) before marginalizing, the population
    analogue of balancing weights that equalize infected and uninfected mass
    within every stratum; infected mass has weight one.
    """
    cells = table.cells
    if weighted:
        pseudo = np.zeros((2, 2))
        for z in (0, 1):
            mass_a = cells[z].sum(axis=(0, 2))  # indexed by a
            if mass_a[0] <= 0.0 or mass_a[1] <= 0.0:
                raise DegenerateMarginError(
                    f"stratum z={z} lacks infected or uninfected mass; "
                    "balancing weights are undefined"
                )
            w_uninfected = mass_a[1] / mass_a[0]
            pseudo[1] += cells[z, :, 1, :].sum(axis=0)
            pseudo[0] += w_uninfected * cells[z, :, 0, :].sum(axis=0)
        margin = pseudo
    else:
        margin = table.margin_ax()
    p_x1 = float(margin[:, 1].sum()) / float(margin.sum())
    if not 0.0 < p_x1 < 1.0:
        raise DegenerateMarginError(
            f"P(X=1) = {p_x1!r} leaves no contrast between feature levels"
        )
    if min(float(margin[1, 1]), float(margin[0, 0])) <= 0.0 or min(
        float(margin[0, 1]), float(margin[1, 0])
    ) <= 0.0:
        raise DegenerateMarginError("a cell of the (A, X) margin has zero mass")
    return float(
        (margin[1, 1] * margin[0, 0]) / (margin[0, 1] * margin[1, 0])
    )


def confounding_curve(
    alpha: float,
    pi: float,
    beta0: float,
    beta1_values: np.ndarray,
    design: ConfounderDesign,
) -> dict[str, np.ndarray]:
    """Sweep beta1 and tabulate unconfounded, crude, and weighted ORs.

    Returns arrays keyed ``beta1``, ``or_unconfounded``, ``or_unadjusted``,
    ``or_weighted``, suitable for serialization or plotting. Each point is
    exact arithmetic on the corresponding joint table.
    """
    beta1_values = np.asarray(beta1_values, dtype=float)
    ors_plain = np.empty(beta1_values.size)
    ors_crude = np.empty(beta1_values.size)
    ors_weighted = np.empty(beta1_values.size)
    for i, b1 in enumerate(beta1_values):
        pt = TheoryPoint(alpha=alpha, pi=pi, beta0=beta0, beta1=float(b1))
        ors_plain[i] = or_closed_form(pt)
        table = build_confounded_joint(alpha, pi, beta0, float(b1), design)
        ors_crude[i] = or_from_joint(table, weighted=False)
        ors_weighted[i] = or_from_joint(table, weighted=True)
    return {
        "beta1": beta1_values,
        "or_unconfounded": ors_plain,
        "or_unadjusted": ors_crude,
        "or_weighted": ors_weighted,
    }
