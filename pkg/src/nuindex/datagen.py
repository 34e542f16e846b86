"""Synthetic cohort generation for the latent-condition symptom model.

A cohort draw follows the generative story from the identification theory:
sample an optional binary confounder Z, then infection A, then the latent
condition Y (only the infected can have it), then K binary features whose
rates depend on Y (and on Z when confounded). Within declared feature
groups the uniforms driving the Bernoulli draws share a Clayton copula, so
features can be dependent while every marginal rate stays exactly at its
model value.

Cohorts round-trip through a documented CSV schema, and a catalog of
built-in scenario specifications mirrors the simulation designs used by
the evaluation harness.
"""

from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleDesignError, SchemaError
from .theory import solve_conditional_from_marginal

__all__ = [
    "ConfoundingSpec",
    "ScenarioSpec",
    "Cohort",
    "sample_clayton_uniforms",
    "sample_cohort",
    "builtin_scenarios",
    "write_cohort_csv",
    "ingest_cohort_csv",
    "scenarios_to_config",
    "scenarios_from_config",
]


def _as_float_vector(values, k: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(k, float(arr))
    if arr.shape != (k,):
        raise DomainError(f"{name} must have one entry per feature ({k}), got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConfoundingSpec:
    """Binary confounder acting on infection and on selected features.

    pz     : P(Z=1)
    rr_az  : P(A=1|Z=1) / P(A=1|Z=0)
    rr_xz  : per-feature rate ratios P(X_k=1|Y,Z=1) / P(X_k=1|Y,Z=0);
             entries equal to 1 leave that feature free of Z
    """

    pz: float
    rr_az: float
    rr_xz: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 0.0 < self.pz < 1.0:
            raise DomainError(f"pz must lie in (0, 1), got {self.pz!r}")
        if not self.rr_az > 0.0:
            raise DomainError(f"rr_az must be positive, got {self.rr_az!r}")
        rr = tuple(float(v) for v in self.rr_xz)
        if any(not v > 0.0 for v in rr):
            raise DomainError("every rr_xz entry must be positive")
        object.__setattr__(self, "rr_xz", rr)


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete recipe for one synthetic cohort.

    n      : cohort size
    alpha  : infection prevalence
    pi     : latent-condition rate among the infected
    beta0  : per-feature background rates
    beta1  : per-feature risk ratios under the latent condition
    groups : partition of the feature indices (0-based) into dependence
             blocks; features in one block share a Clayton copula
    rho    : Clayton dependence parameter, 0 means independent features
    confounder : optional ConfoundingSpec
    seed   : integer seed defining the cohort's random stream
    """

    n: int
    alpha: float
    pi: float
    beta0: tuple[float, ...]
    beta1: tuple[float, ...]
    groups: tuple[tuple[int, ...], ...]
    rho: float = 0.0
    confounder: ConfoundingSpec | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n) < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("alpha", "pi"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
        beta0 = tuple(float(v) for v in self.beta0)
        beta1 = tuple(float(v) for v in self.beta1)
        if len(beta0) != len(beta1) or not beta0:
            raise DomainError("beta0 and beta1 must be equal-length, nonempty")
        k = len(beta0)
        if any(not 0.0 < b < 1.0 for b in beta0):
            raise DomainError("every beta0 entry must lie in (0, 1)")
        for j, (b0, b1) in enumerate(zip(beta0, beta1)):
            if not b1 > 0.0 or b0 * b1 > 1.0 + 1e-12:
                raise DomainError(
                    f"feature {j + 1}: beta1 must lie in (0, 1/beta0], "
                    f"got beta0={b0!r}, beta1={b1!r}"
                )
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "beta1", beta1)
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        flat = sorted(i for g in groups for i in g)
        if flat != list(range(k)) or any(len(g) == 0 for g in groups):
            raise DomainError(
                "groups must partition the feature indices 0..K-1 into "
                "nonempty blocks"
            )
        object.__setattr__(self, "groups", groups)
        if not self.rho >= 0.0:
            raise DomainError(f"rho must be nonnegative, got {self.rho!r}")
        if self.confounder is not None:
            if len(self.confounder.rr_xz) != k:
                raise DomainError(
                    "confounder.rr_xz length must match the feature count"
                )
            # Fail at spec time if any stratum feature rate would leave (0, 1].
            for j in range(k):
                b_lo, b_hi = solve_conditional_from_marginal(
                    beta0[j], self.confounder.pz, self.confounder.rr_xz[j]
                )
                if max(b_lo, b_hi) * beta1[j] > 1.0 + 1e-12:
                    raise InfeasibleDesignError(
                        f"feature {j + 1}: stratum baseline with rr_xz="
                        f"{self.confounder.rr_xz[j]} and beta1={beta1[j]} "
                        "forces a conditional rate above 1"
                    )

    @property
    def k(self) -> int:
        return len(self.beta0)


@dataclass
class Cohort:
    """One realized cohort: ids, infection labels, features, extras.

    ``y_latent`` carries the latent condition for simulated cohorts (it is
    never available for real data) and must respect the model: a positive
    latent flag implies infection. ``z_values`` holds named stratum columns
    when the design is confounded.
    """

    ids: np.ndarray
    infected: np.ndarray
    features: np.ndarray
    feature_names: tuple[str, ...]
    z_values: dict[str, np.ndarray] | None = None
    y_latent: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids)
        self.infected = np.asarray(self.infected, dtype=np.int8)
        self.features = np.asarray(self.features, dtype=np.int8)
        n = self.infected.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DomainError("features must be an (n, K) array")
        if len(self.feature_names) != self.features.shape[1]:
            raise DomainError("feature_names must match the feature count")
        self.feature_names = tuple(self.feature_names)
        if self.ids.shape != (n,):
            raise DomainError("ids must be a length-n vector")
        if np.unique(self.ids).size != n:
            raise DomainError("ids must be unique")
        for arr, name in ((self.infected, "infected"), (self.features, "features")):
            if not np.isin(arr, (0, 1)).all():
                raise DomainError(f"{name} must be binary")
        if self.y_latent is not None:
            self.y_latent = np.asarray(self.y_latent, dtype=np.int8)
            if self.y_latent.shape != (n,):
                raise DomainError("y_latent must be a length-n vector")
            if np.any((self.y_latent == 1) & (self.infected == 0)):
                raise DomainError("latent condition without infection is impossible")
        if self.z_values is not None:
            for col, values in self.z_values.items():
                values = np.asarray(values)
                if values.shape != (n,):
                    raise DomainError(f"stratum column {col} must have length n")
                self.z_values[col] = values

    @property
    def n(self) -> int:
        return int(self.infected.shape[0])

    @property
    def k(self) -> int:
        return int(self.features.shape[1])

    def subset(self, rows: np.ndarray) -> "Cohort":
        """New cohort restricted to the given boolean mask or index array."""
        rows = np.asarray(rows)
        idx = np.flatnonzero(rows) if rows.dtype == bool else rows
        return Cohort(
            ids=self.ids[idx],
            infected=self.infected[idx],
            features=self.features[idx],
            feature_names=self.feature_names,
            z_values=(
                {c: np.asarray(v)[idx] for c, v in self.z_values.items()}
                if self.z_values
                else None
            ),
            y_latent=None if self.y_latent is None else self.y_latent[idx],
        )

    def stratum_codes(self) -> tuple[np.ndarray, tuple[str, ...]]:
        """Integer stratum code per row plus printable level names.

        Strata are the cross-classification of all z columns. Raises
        DomainError when the cohort carries no stratum columns.
        """
        if not self.z_values:
            raise DomainError("cohort has no stratum columns")
        names = sorted(self.z_values)
        columns = [np.asarray(self.z_values[c]).astype(str) for c in names]
        combined = np.array(["|".join(vals) for vals in zip(*columns)])
        levels, codes = np.unique(combined, return_inverse=True)
        labels = tuple(
            ",".join(f"{c}={v}" for c, v in zip(names, lev.split("|")))
            for lev in levels
        )
        return codes, labels


def sample_clayton_uniforms(
    rho: float,
    d: int,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw d-variate uniforms coupled by a Clayton copula.

    Uses the frailty representation: with V ~ Gamma(1/rho, 1) and E_j iid
    Exp(1), U_j = (1 + E_j/V)**(-1/rho) has Uniform(0,1) margins and Clayton
    dependence with Kendall's tau = rho/(rho+2). rho = 0 returns independent
    uniforms. Returns shape (d,) or, when ``size`` is given, (size, d).
    """
    if not rho >= 0.0:
        raise DomainError(f"rho must be nonnegative, got {rho!r}")
    d = int(d)
    if d < 1:
        raise DomainError(f"d must be at least 1, got {d!r}")
    shape = (d,) if size is None else (int(size), d)
    if rho == 0.0:
        return rng.random(shape)
    v_shape = () if size is None else (int(size), 1)
    v = rng.gamma(1.0 / rho, 1.0, size=v_shape)
    e = rng.exponential(1.0, size=shape)
    return (1.0 + e / v) ** (-1.0 / rho)


def _stratum_feature_rates(spec: ScenarioSpec) -> np.ndarray:
    """Background feature rate per (stratum, feature); row 0 is z=0."""
    k = spec.k
    rates = np.empty((2, k))
    if spec.confounder is None:
        rates[0] = rates[1] = np.asarray(spec.beta0)
        return rates
    for j in range(k):
        rates[0, j], rates[1, j] = solve_conditional_from_marginal(
            spec.beta0[j], spec.confounder.pz, spec.confounder.rr_xz[j]
        )
    return rates


def sample_cohort(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> Cohort:
    """Sample one cohort from a scenario specification.

    The random stream defaults to ``np.random.default_rng(spec.seed)``, so
    identical specs yield bit-identical cohorts no matter where or in what
    order they are sampled. Draw order is fixed and documented: stratum,
    infection, latent condition, then feature groups in catalog order.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n, k = spec.n, spec.k
    if spec.confounder is not None:
        z = (rng.random(n) < spec.confounder.pz).astype(np.int8)
        a0, a1 = solve_conditional_from_marginal(
            spec.alpha, spec.confounder.pz, spec.confounder.rr_az
        )
        p_infect = np.where(z == 1, a1, a0)
        z_values = {"z": z.astype(np.int64)}
    else:
        z = np.zeros(n, dtype=np.int8)
        p_infect = spec.alpha
        z_values = None
    infected = (rng.random(n) < p_infect).astype(np.int8)
    y_latent = ((infected == 1) & (rng.random(n) < spec.pi)).astype(np.int8)

    base = _stratum_feature_rates(spec)[z]  # (n, k) background rates
    beta1 = np.asarray(spec.beta1)
    probs = base * np.where(y_latent[:, None] == 1, beta1[None, :], 1.0)
    np.clip(probs, 0.0, 1.0, out=probs)

    features = np.empty((n, k), dtype=np.int8)
    for group in spec.groups:
        idx = np.asarray(group, dtype=np.intp)
        u = sample_clayton_uniforms(spec.rho, idx.size, rng, size=n)
        # Success iff the uniform exceeds the failure mass 1 - p, which
        # keeps each margin exactly Bernoulli(p) while the Clayton lower
        # tail couples the feature-absent outcomes.
        features[:, idx] = (u > 1.0 - probs[:, idx]).astype(np.int8)

    return Cohort(
        ids=np.arange(n, dtype=np.int64),
        infected=infected,
        features=features,
        feature_names=tuple(f"x_{j + 1}" for j in range(k)),
        z_values=z_values,
        y_latent=y_latent,
    )


# --------------------------------------------------------------------------
# Built-in scenario catalog


_SIGNAL_EXPONENT = {"low": 1.0, "medium": 1.2, "high": 1.4}
_GROUP_SIZES = (1, 2, 3, 3, 3, 5, 6, 7, 10)
_CATALOG_K = 40
_N_NONNULL = 12


def _catalog_beta1(level: str) -> tuple[float, ...]:
    s = _SIGNAL_EXPONENT[level]
    base = [1.3] * 4 + [1.5] * 4 + [1.7] * 4 + [1.0] * (_CATALOG_K - _N_NONNULL)
    return tuple(b**s for b in base)


def _chop(order: list[int], sizes: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    groups, start = [], 0
    for size in sizes:
        groups.append(tuple(order[start : start + size]))
        start += size
    return tuple(groups)


def _grouping(kind: str) -> tuple[tuple[int, ...], ...]:
    if kind == "uncorrelated":
        return tuple((j,) for j in range(_CATALOG_K))
    if kind == "group_sparse":
        # Signal features fill whole blocks: the five leading blocks are
        # exactly the twelve non-null features.
        return _chop(list(range(_CATALOG_K)), _GROUP_SIZES)
    if kind == "non_group_sparse":
        # Spread the twelve signal features over all nine blocks (one
        # each, extras to the largest blocks) so every null feature is
        # correlated with some signal feature.
        n_groups = len(_GROUP_SIZES)
        counts = [1] * n_groups
        order_by_size = sorted(range(n_groups), key=lambda g: -_GROUP_SIZES[g])
        for i in range(_N_NONNULL - n_groups):
            counts[order_by_size[i % n_groups]] += 1
        signals = iter(range(_N_NONNULL))
        nulls = iter(range(_N_NONNULL, _CATALOG_K))
        groups = []
        for g, size in enumerate(_GROUP_SIZES):
            members = [next(signals) for _ in range(counts[g])]
            members.extend(next(nulls) for _ in range(size - counts[g]))
            groups.append(tuple(members))
        return tuple(groups)
    raise DomainError(f"unknown grouping kind {kind!r}")


def builtin_scenarios(n: int = 10_000) -> dict[str, ScenarioSpec]:
    """Catalog of the built-in simulation scenarios.

    Nine main cells cross signal strength {low, medium, high} with feature
    dependence {uncorrelated, non_group_sparse, group_sparse}; dependence
    uses Clayton rho = 5 (Kendall tau about 0.71) inside the catalog's
    nine dependence blocks. Six confounded cells take the medium-signal
    uncorrelated design at alpha = 0.7 and cross the set of Z-affected
    features {none, nonoverlap, overlap} (relative to the twelve signal
    features) with the sign of the Z-infection association {negative:
    rr_az = 0.65, positive: rr_az = 1.7}; Z-affected features get rate
    ratios evenly spaced from 1.35 to 2.0. Seeds default to 0; the harness
    replaces them per replicate.
    """
    scenarios: dict[str, ScenarioSpec] = {}
    beta0 = (0.2,) * _CATALOG_K
    for level in ("low", "medium", "high"):
        beta1 = _catalog_beta1(level)
        for kind, rho in (
            ("uncorrelated", 0.0),
            ("non_group_sparse", 5.0),
            ("group_sparse", 5.0),
        ):
            scenarios[f"{level}_{kind}"] = ScenarioSpec(
                n=n,
                alpha=0.8,
                pi=0.2,
                beta0=beta0,
                beta1=beta1,
                groups=_grouping(kind),
                rho=rho,
            )
    medium = _catalog_beta1("medium")
    affected = np.linspace(1.35, 2.0, _N_NONNULL)
    for overlap, label in (
        (None, "none"),
        (range(_N_NONNULL, 2 * _N_NONNULL), "nonoverlap"),
        (range(_N_NONNULL), "overlap"),
    ):
        rr_xz = np.ones(_CATALOG_K)
        if overlap is not None:
            rr_xz[list(overlap)] = affected
        for rr_az, sign in ((0.65, "negative"), (1.7, "positive")):
            scenarios[f"confound_{label}_{sign}"] = ScenarioSpec(
                n=n,
                alpha=0.7,
                pi=0.2,
                beta0=beta0,
                beta1=medium,
                groups=_grouping("uncorrelated"),
                rho=0.0,
                confounder=ConfoundingSpec(
                    pz=0.55, rr_az=rr_az, rr_xz=tuple(rr_xz)
                ),
            )
    return scenarios


# --------------------------------------------------------------------------
# CSV round trip


def write_cohort_csv(cohort: Cohort, path: str, include_latent: bool = False) -> None:
    """Write a cohort to CSV: id, infected, z columns, then features.

    ``include_latent`` adds a y_latent column for simulated cohorts; the
    ingest side ignores it unless asked to keep it, since real data never
    has the latent flag.
    """
    z_names = sorted(cohort.z_values) if cohort.z_values else []
    header = ["id", "infected", *z_names, *cohort.feature_names]
    if include_latent:
        if cohort.y_latent is None:
            raise DomainError("cohort has no latent labels to write")
        header.append("y_latent")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        z_cols = [cohort.z_values[c] for c in z_names] if z_names else []
        for i in range(cohort.n):
            row = [cohort.ids[i], int(cohort.infected[i])]
            row.extend(col[i] for col in z_cols)
            row.extend(int(v) for v in cohort.features[i])
            if include_latent:
                row.append(int(cohort.y_latent[i]))
            writer.writerow(row)


def _parse_binary(value: str, row: int, column: str) -> int:
    if value == "0":
        return 0
    if value == "1":
        return 1
    raise SchemaError(
        f"row {row}, column {column}: expected 0 or 1, got {value!r}"
    )


def ingest_cohort_csv(path: str, keep_latent: bool = False) -> Cohort:
    """Read a cohort CSV into a validated Cohort.

    Requires an ``infected`` column and at least one ``x_``-prefixed
    feature column, all strictly binary. ``z_``-prefixed columns become
    stratum columns and may hold any categorical values. An ``id`` column
    is used when present (must be unique), otherwise row numbers serve as
    ids. Other columns are ignored. Schema violations raise SchemaError
    naming the offending row and column.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    positions = {name: i for i, name in enumerate(header)}
    if len(positions) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    if "infected" not in positions:
        raise SchemaError(f"{path}: missing required column 'infected'")
    feature_names = [c for c in header if c.startswith("x_")]
    if not feature_names:
        raise SchemaError(f"{path}: no feature columns (prefix 'x_') found")
    z_names = [c for c in header if c.startswith("z_") or c == "z"]
    want_latent = keep_latent and "y_latent" in positions

    n = len(rows)
    width = len(header)
    for r, row in enumerate(rows, start=2):
        if len(row) != width:
            raise SchemaError(
                f"{path}: row {r} has {len(row)} fields, expected {width}"
            )
    infected = np.empty(n, dtype=np.int8)
    features = np.empty((n, len(feature_names)), dtype=np.int8)
    z_values: dict[str, np.ndarray] = {c: np.empty(n, dtype=object) for c in z_names}
    y_latent = np.empty(n, dtype=np.int8) if want_latent else None
    ids: np.ndarray
    if "id" in positions:
        ids = np.array([row[positions["id"]] for row in rows])
        if np.unique(ids).size != n:
            raise SchemaError(f"{path}: 'id' column has duplicate values")
    else:
        ids = np.arange(n, dtype=np.int64)
    inf_pos = positions["infected"]
    feat_pos = [positions[c] for c in feature_names]
    for r, row in enumerate(rows):
        line = r + 2  # header is line 1
        infected[r] = _parse_binary(row[inf_pos], line, "infected")
        for j, pos in enumerate(feat_pos):
            features[r, j] = _parse_binary(row[pos], line, feature_names[j])
        for c in z_names:
            z_values[c][r] = row[positions[c]]
        if want_latent:
            y_latent[r] = _parse_binary(row[positions["y_latent"]], line, "y_latent")
    return Cohort(
        ids=ids,
        infected=infected,
        features=features,
        feature_names=tuple(feature_names),
        z_values=z_values or None,
        y_latent=y_latent,
    )


# --------------------------------------------------------------------------
# Scenario (de)serialization: INI-style key-value text with nested sections


def _format_groups(groups: tuple[tuple[int, ...], ...]) -> str:
    return " | ".join(",".join(str(i + 1) for i in g) for g in groups)


def _parse_groups(text: str) -> tuple[tuple[int, ...], ...]:
    groups = []
    for block in text.split("|"):
        block = block.strip()
        if not block:
            raise DomainError("empty group in groups specification")
        groups.append(tuple(int(tok) - 1 for tok in block.split(",")))
    return tuple(groups)


def _format_vector(values) -> str:
    arr = np.asarray(values, dtype=float)
    if np.unique(arr).size == 1:
        return repr(float(arr[0]))
    return ",".join(repr(float(v)) for v in arr)


def _parse_vector(text: str, k: int, name: str) -> np.ndarray:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    values = np.array([float(p) for p in parts])
    if values.size == 1:
        values = np.full(k, values[0])
    if values.size != k:
        raise DomainError(f"{name} must have 1 or {k} entries, got {values.size}")
    return values


def scenarios_to_config(scenarios: dict[str, ScenarioSpec]) -> str:
    """Serialize scenario specs as INI text with nested sections.

    Feature indices in ``groups`` are written 1-based. A ``[scenario.NAME
    .confounder]`` subsection appears only for confounded designs.
    """
    parser = configparser.ConfigParser()
    for name, spec in scenarios.items():
        section = f"scenario.{name}"
        parser[section] = {
            "n": str(spec.n),
            "alpha": repr(spec.alpha),
            "pi": repr(spec.pi),
            "k": str(spec.k),
            "beta0": _format_vector(spec.beta0),
            "beta1": _format_vector(spec.beta1),
            "groups": _format_groups(spec.groups),
            "rho": repr(spec.rho),
            "seed": str(spec.seed),
        }
        if spec.confounder is not None:
            parser[f"{section}.confounder"] = {
                "pz": repr(spec.confounder.pz),
                "rr_az": repr(spec.confounder.rr_az),
                "rr_xz": _format_vector(spec.confounder.rr_xz),
            }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def scenarios_from_config(text: str) -> dict[str, ScenarioSpec]:
    """Parse scenario specs from INI text produced by scenarios_to_config."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    scenarios: dict[str, ScenarioSpec] = {}
    for section in parser.sections():
        if not section.startswith("scenario.") or section.endswith(".confounder"):
            continue
        name = section[len("scenario.") :]
        sec = parser[section]
        k = sec.getint("k")
        confounder = None
        sub = f"{section}.confounder"
        if parser.has_section(sub):
            csec = parser[sub]
            confounder = ConfoundingSpec(
                pz=csec.getfloat("pz"),
                rr_az=csec.getfloat("rr_az"),
                rr_xz=tuple(_parse_vector(csec["rr_xz"], k, "rr_xz")),
            )
        scenarios[name] = ScenarioSpec(
            n=sec.getint("n"),
            alpha=sec.getfloat("alpha"),
            pi=sec.getfloat("pi"),
            beta0=tuple(_parse_vector(sec["beta0"], k, "beta0")),
            beta1=tuple(_parse_vector(sec["beta1"], k, "beta1")),
            groups=_parse_groups(sec["groups"]),
            rho=sec.getfloat("rho", fallback=0.0),
            confounder=confounder,
            seed=sec.getint("seed", fallback=0),
        )
    return scenarios
