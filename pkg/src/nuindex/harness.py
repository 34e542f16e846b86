"""Replicated simulation studies and the end-to-end cohort pipeline.

A study crosses scenarios with weighting arms and replicates, runs the
whole chain (sample cohort, optional balancing weights, cross-validated
penalized fit, selection and discrimination metrics) per replicate, and
aggregates. Study discrimination scores individuals by the fitted linear
score; the integer-rounded index belongs to the applied pipeline. Replicates are independent work units with
self-contained random streams derived from (master seed, scenario name,
replicate), so results are identical no matter how many worker processes
execute them; assembly sorts by (scenario, arm, replicate).

Output files are plain CSV with documented headers, numerics at six
significant digits, plus a JSON manifest echoing the configuration and
the design decisions in effect. Nothing time- or host-dependent is
written, so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .datagen import (
    Cohort,
    ScenarioSpec,
    builtin_scenarios,
    ingest_cohort_csv,
    sample_cohort,
)
from .errors import DomainError, NuindexError
from .index import score, symptom_count
from .metrics import (
    PipelineConfig,
    cv_threshold_curve,
    auc,
    aucpr,
    fit_index_pipeline,
    selection_metrics,
    wilcoxon_statistic,
)
from .penalized_glm import compute_balancing_weights, cv_fit

__all__ = [
    "StudyConfig",
    "ReplicateRecord",
    "StudyResult",
    "run_study",
    "emit_table",
    "emit_discrimination",
    "emit_records",
    "write_study_outputs",
    "run_pipeline",
    "DECISION_FLAGS",
]

# Every behavioral decision a run depends on, echoed into manifests so a
# result can be audited against the code that made it.
DECISION_FLAGS = {
    "standardize_features": False,
    "penalty_rule_default": "one_se",
    "cv_loss_default": "deviance",
    "study_default_arm": "balancing (both arms on confounded scenarios)",
    "study_score": "linear score (integer rounding is applied-pipeline only)",
    "integer_rounding": "nearest-tenth-times-ten, half away from zero, decimal",
    "kendall_variant": "tau-b",
    "aucpr_method": "average-precision-step",
    "wilcoxon_statistic": "tie-corrected-z",
    "fold_scheme": "label-stratified round robin over id-sorted shuffles",
    "curve_rate_grid": "0.01..0.99 step 0.01",
    "stream_derivation": "SeedSequence((master_seed, crc32(scenario), replicate))",
    "aggregation_quantiles": "linear interpolation (numpy default)",
}


@dataclass(frozen=True)
class StudyConfig:
    """Recipe for one replicated simulation study.

    ``scenarios`` are catalog names, resolved against ``builtin_scenarios``
    and then ``catalog`` (inline definitions override built-ins). ``n``
    overrides every scenario's cohort size when set. ``arms`` is one of
    "unadjusted", "balancing", "both", or "auto"; auto runs both arms on
    confounded scenarios and the balancing arm elsewhere (an unconfounded
    cohort is a single stratum, so balancing just evens out the two class
    masses).
    """

    scenarios: tuple[str, ...]
    replicates: int = 100
    n: int | None = 10_000
    master_seed: int = 1
    arms: str = "auto"
    workers: int = 1
    folds: int = 10
    n_lambda: int = 100
    min_ratio: float = 0.01
    rule: str = "one_se"
    loss: str = "deviance"
    catalog: dict[str, ScenarioSpec] | None = None

    def __post_init__(self) -> None:
        if not self.scenarios:
            raise DomainError("at least one scenario is required")
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")
        if self.arms not in ("unadjusted", "balancing", "both", "auto"):
            raise DomainError(f"unknown arms setting {self.arms!r}")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")
        if self.master_seed < 0:
            raise DomainError("master_seed must be nonnegative")

    def resolve(self) -> dict[str, ScenarioSpec]:
        """Materialize the scenario specs this study runs, n applied."""
        known = builtin_scenarios()
        if self.catalog:
            known.update(self.catalog)
        resolved = {}
        for name in self.scenarios:
            if name not in known:
                raise DomainError(f"unknown scenario {name!r}")
            spec = known[name]
            if self.n is not None:
                spec = dataclasses.replace(spec, n=self.n)
            resolved[name] = spec
        return resolved

    def arms_for(self, spec: ScenarioSpec) -> tuple[str, ...]:
        if self.arms == "both":
            return ("balancing", "unadjusted")
        if self.arms == "auto":
            if spec.confounder is not None:
                return ("balancing", "unadjusted")
            return ("balancing",)
        return (self.arms,)


@dataclass(frozen=True)
class ReplicateRecord:
    """Metrics from one scenario×arm×replicate cell, or its failure."""

    scenario: str
    arm: str
    replicate: int
    error: str | None = None
    n_selected: int | None = None
    tpr: float | None = None
    tnr: float | None = None
    kendall_tau: float | None = None
    auc_index: float | None = None
    aucpr_index: float | None = None
    wilcoxon_index: float | None = None
    auc_count: float | None = None
    aucpr_count: float | None = None
    wilcoxon_count: float | None = None


_SUMMARY_FIELDS = (
    "selected_median",
    "selected_q1",
    "selected_q3",
    "tpr_mean",
    "tpr_sd",
    "tnr_mean",
    "tnr_sd",
    "tau_mean",
    "tau_sd",
)


def _nan_stats(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return math.nan, math.nan
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def aggregate_records(
    records: tuple[ReplicateRecord, ...],
) -> dict[tuple[str, str], dict[str, float]]:
    """Selection summaries per (scenario, arm): median/IQR and mean/SD.

    Failed replicates are excluded; NaN metric values (for example a rank
    correlation that is undefined because every estimate is zero) are
    dropped from the affected statistic only.
    """
    cells: dict[tuple[str, str], list[ReplicateRecord]] = {}
    for rec in records:
        cells.setdefault((rec.scenario, rec.arm), []).append(rec)
    summaries = {}
    for key, recs in sorted(cells.items()):
        ok = [r for r in recs if r.error is None]
        row: dict[str, float] = {"n_ok": len(ok), "n_failed": len(recs) - len(ok)}
        if ok:
            selected = np.asarray([r.n_selected for r in ok], dtype=float)
            q1, med, q3 = np.percentile(selected, [25.0, 50.0, 75.0])
            row.update(selected_median=float(med), selected_q1=float(q1), selected_q3=float(q3))
            for field in ("tpr", "tnr", "kendall_tau"):
                mean, sd = _nan_stats([getattr(r, field) for r in ok])
                name = "tau" if field == "kendall_tau" else field
                row[f"{name}_mean"] = mean
                row[f"{name}_sd"] = sd
        else:
            row.update({f: math.nan for f in _SUMMARY_FIELDS})
        summaries[key] = row
    return summaries


@dataclass
class StudyResult:
    """All per-replicate records plus aggregated selection summaries."""

    config: StudyConfig
    records: tuple[ReplicateRecord, ...]
    summaries: dict[tuple[str, str], dict[str, float]]


def _replicate_task(args) -> list[ReplicateRecord]:
    """Run every arm of one (scenario, replicate) cell. Never raises."""
    name, spec, replicate, master_seed, arms, fit_kw = args
    stream = np.random.SeedSequence(
        (master_seed, zlib.crc32(name.encode("utf-8")), replicate)
    )
    seed = int(stream.generate_state(1, np.uint64)[0])
    records = []
    try:
        cohort = sample_cohort(dataclasses.replace(spec, seed=seed))
    except Exception as exc:  # noqa: BLE001 - crash isolation by contract
        return [
            ReplicateRecord(name, arm, replicate, error=f"{type(exc).__name__}: {exc}")
            for arm in arms
        ]
    true_beta1 = np.asarray(spec.beta1)
    counts = symptom_count(cohort.features)
    for arm in arms:
        try:
            weights = (
                compute_balancing_weights(cohort) if arm == "balancing" else None
            )
            fit = cv_fit(
                cohort.features,
                cohort.infected,
                weights,
                ids=cohort.ids,
                seed=seed,
                **fit_kw,
            )
            sel = selection_metrics(
                fit.final_coefficients, true_beta1, allow_empty_class=True
            )
            # Discrimination uses the fitted linear score itself; the
            # integer-rounded variant is an applied-pipeline convenience.
            index_scores = cohort.features @ fit.final_coefficients
            y = cohort.y_latent
            records.append(
                ReplicateRecord(
                    scenario=name,
                    arm=arm,
                    replicate=replicate,
                    n_selected=sel.n_selected,
                    tpr=sel.tpr,
                    tnr=sel.tnr,
                    kendall_tau=sel.kendall_tau,
                    auc_index=auc(index_scores, y),
                    aucpr_index=aucpr(index_scores, y),
                    wilcoxon_index=wilcoxon_statistic(index_scores, y),
                    auc_count=auc(counts, y),
                    aucpr_count=aucpr(counts, y),
                    wilcoxon_count=wilcoxon_statistic(counts, y),
                )
            )
        except Exception as exc:  # noqa: BLE001 - crash isolation by contract
            records.append(
                ReplicateRecord(
                    name, arm, replicate, error=f"{type(exc).__name__}: {exc}"
                )
            )
    return records


def run_study(config: StudyConfig) -> StudyResult:
    """Execute a replicated study; deterministic for a given master seed.

    Each (scenario, replicate) cell is one work unit; both arms of a cell
    score the same sampled cohort. Failing replicates are recorded with
    their error text and never disturb the rest; only a cell whose
    replicates all failed aborts the study.
    """
    resolved = config.resolve()
    fit_kw = {
        "folds": config.folds,
        "rule": config.rule,
        "n_lambda": config.n_lambda,
        "min_ratio": config.min_ratio,
        "loss": config.loss,
    }
    tasks = [
        (name, spec, rep, config.master_seed, config.arms_for(spec), fit_kw)
        for name, spec in resolved.items()
        for rep in range(config.replicates)
    ]
    if config.workers == 1:
        chunks = [_replicate_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (config.workers * 4))
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_replicate_task, tasks, chunksize=chunk))
    records = tuple(
        sorted(
            (rec for group in chunks for rec in group),
            key=lambda r: (r.scenario, r.arm, r.replicate),
        )
    )
    for (scenario, arm), row in aggregate_records(records).items():
        if row["n_ok"] == 0:
            failures = [
                r.error for r in records if (r.scenario, r.arm) == (scenario, arm)
            ]
            raise NuindexError(
                f"every replicate of {scenario}/{arm} failed; first error: "
                f"{failures[0]}"
            )
    return StudyResult(
        config=config, records=records, summaries=aggregate_records(records)
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def _csv_line(values) -> str:
    return ",".join(_fmt(v) for v in values)


def emit_records(result: StudyResult) -> str:
    """Long-format CSV of every replicate record, failures included."""
    fields = [f.name for f in dataclasses.fields(ReplicateRecord)]
    out = io.StringIO()
    out.write(",".join(fields) + "\n")
    for rec in result.records:
        out.write(_csv_line(getattr(rec, f) for f in fields) + "\n")
    return out.getvalue()


def emit_table(result: StudyResult, style: str = "main") -> str:
    """Selection-performance table as CSV.

    ``main`` emits one row per scenario and arm with the summary columns.
    ``confounding`` pairs the balancing and unadjusted arms side by side,
    balancing first, covering the scenarios that ran both arms; at least
    one scenario must have.
    """
    if not result.records:
        raise DomainError("result has no records")
    if style == "main":
        header = ["scenario", "arm", *_SUMMARY_FIELDS]
        lines = [",".join(header)]
        for (scenario, arm), row in result.summaries.items():
            lines.append(
                _csv_line(
                    [scenario, arm, *(row.get(f, math.nan) for f in _SUMMARY_FIELDS)]
                )
            )
        return "\n".join(lines) + "\n"
    if style == "confounding":
        scenarios = sorted(
            s
            for s in {s for s, _ in result.summaries}
            if (s, "balancing") in result.summaries
            and (s, "unadjusted") in result.summaries
        )
        if not scenarios:
            raise DomainError("confounding style needs a scenario with both arms")
        header = ["scenario"]
        for field in _SUMMARY_FIELDS:
            header.extend((f"{field}_balancing", f"{field}_unadjusted"))
        lines = [",".join(header)]
        for scenario in scenarios:
            row = [scenario]
            for field in _SUMMARY_FIELDS:
                for arm in ("balancing", "unadjusted"):
                    cell = result.summaries[(scenario, arm)]
                    row.append(cell.get(field, math.nan))
            lines.append(_csv_line(row))
        return "\n".join(lines) + "\n"
    raise DomainError(f"unknown table style {style!r}")


def emit_discrimination(result: StudyResult) -> str:
    """Long-format CSV of discrimination metrics per replicate and scorer."""
    if not result.records:
        raise DomainError("result has no records")
    lines = ["scenario,arm,scorer,replicate,auc,aucpr,wilcoxon_z"]
    for rec in result.records:
        if rec.error is not None:
            continue
        for scorer, a_, p_, z_ in (
            ("index", rec.auc_index, rec.aucpr_index, rec.wilcoxon_index),
            ("symptom_count", rec.auc_count, rec.aucpr_count, rec.wilcoxon_count),
        ):
            lines.append(
                _csv_line([rec.scenario, rec.arm, scorer, rec.replicate, a_, p_, z_])
            )
    return "\n".join(lines) + "\n"


def _manifest(payload: dict) -> str:
    body = {
        "package": "nuindex",
        "version": __version__,
        "decisions": DECISION_FLAGS,
        **payload,
    }
    return json.dumps(body, indent=2, sort_keys=True, default=str) + "\n"


def write_study_outputs(result: StudyResult, out_dir: str) -> dict[str, str]:
    """Write records, tables, discrimination CSV, and the run manifest.

    The confounding-style table appears only when some scenario ran both
    arms. File contents are deterministic functions of the result.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def _write(name: str, text: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as handle:
            handle.write(text)
        paths[name] = path

    _write("records.csv", emit_records(result))
    _write("table_main.csv", emit_table(result, "main"))
    arms_by_scenario: dict[str, set[str]] = {}
    for scenario, arm in result.summaries:
        arms_by_scenario.setdefault(scenario, set()).add(arm)
    if any({"balancing", "unadjusted"} <= arms for arms in arms_by_scenario.values()):
        _write("table_confounding.csv", emit_table(result, "confounding"))
    _write("discrimination.csv", emit_discrimination(result))
    cfg = dataclasses.asdict(result.config)
    cfg.pop("catalog", None)
    # Worker count is an execution detail with no effect on the result;
    # leaving it out keeps outputs byte-identical across worker counts.
    cfg.pop("workers", None)
    _write("manifest.json", _manifest({"study_config": cfg}))
    return paths


def run_pipeline(
    cohort_path: str,
    config: PipelineConfig | None = None,
    out_dir: str = ".",
    curve_folds: int = 10,
) -> dict[str, str]:
    """Full applied pipeline on a cohort CSV; writes all artifacts.

    Steps: ingest, optional balancing weights, cross-validated penalized
    fit, integer index, per-individual scores, and the cross-validated
    threshold curve. Artifacts: coefficients.csv (feature,
    raw_coefficient, selected_flag), cv_profile.csv (lambda, mean_error,
    se, nonzero_count), scores.csv (id, infected, index, symptom_count),
    curve.csv (threshold, rate_infected, rate_uninfected, fold; fold is a
    fold number or "mean" for the grid-averaged curve, whose thresholds
    are empty), and manifest.json.
    """
    config = config or PipelineConfig()
    cohort = ingest_cohort_csv(cohort_path)
    if config.use_weights and not cohort.z_values:
        raise DomainError(
            "balancing weights requested but the cohort has no stratum "
            "(z_) columns"
        )
    fit, model, _ = fit_index_pipeline(cohort, config)
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def _write(name: str, text: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as handle:
            handle.write(text)
        paths[name] = path

    lines = ["feature,raw_coefficient,selected_flag"]
    for name, coef in zip(model.feature_names, model.raw_coefficients):
        # full precision: the coefficients are the model
        lines.append(f"{name},{float(coef)!r},{int(coef != 0.0)}")
    _write("coefficients.csv", "\n".join(lines) + "\n")

    lines = ["lambda,mean_error,se,nonzero_count"]
    for lam, err, se, nz in zip(
        fit.lambdas, fit.cv_error, fit.cv_se, fit.nonzero_path
    ):
        lines.append(_csv_line([lam, err, se, int(nz)]))
    _write("cv_profile.csv", "\n".join(lines) + "\n")

    index_scores = score(model, cohort.features)
    counts = symptom_count(cohort.features)
    lines = ["id,infected,index,symptom_count"]
    for i in range(cohort.n):
        lines.append(
            f"{cohort.ids[i]},{int(cohort.infected[i])},"
            f"{int(index_scores[i])},{int(counts[i])}"
        )
    _write("scores.csv", "\n".join(lines) + "\n")

    curve = cv_threshold_curve(cohort, folds=curve_folds, config=config)
    lines = ["threshold,rate_infected,rate_uninfected,fold"]
    for f, fold_curve in enumerate(curve.fold_curves or ()):
        for t, r1, r0 in zip(
            fold_curve.thresholds, fold_curve.rate_infected, fold_curve.rate_uninfected
        ):
            lines.append(_csv_line([t, r1, r0, f]))
    if curve.mean_curve is not None:
        for r1, r0 in zip(
            curve.mean_curve.rate_infected, curve.mean_curve.rate_uninfected
        ):
            lines.append(_csv_line([None, r1, r0, "mean"]))
    _write("curve.csv", "\n".join(lines) + "\n")

    _write(
        "manifest.json",
        _manifest(
            {
                "pipeline_config": dataclasses.asdict(config),
                "cohort": os.path.basename(cohort_path),
                "curve_folds": curve_folds,
                "selected_lambda": model.selected_lambda,
                "intercept": fit.final_intercept,
                "weighting_mode": model.weighting_mode,
            }
        ),
    )
    return paths
