"""Command-line front end.

Subcommands cover the whole toolkit: ``simulate`` writes synthetic
cohorts, ``study`` runs replicated simulation studies, ``fit`` fits the
cross-validated penalized model on a cohort CSV, ``index`` scores a
cohort with a coefficients file, ``metrics`` and ``curve`` evaluate a
scores file, ``theory`` tabulates the exact odds-ratio identities, and
``pipeline`` runs everything end to end. The NUINDEX_OUT_DIR environment
variable supplies the default output directory; flags override it.

Study and scenario configuration can live in an INI-style config file
(sections nested by dots), documented in the README; command-line flags
override file values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import __version__, datagen, harness, metrics, theory
from .errors import NuindexError, SchemaError
from .index import IndexModel, score, symptom_count
from .metrics import PipelineConfig


def _default_out_dir() -> str:
    return os.environ.get("NUINDEX_OUT_DIR", ".")


def _out_path(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _add_out_dir(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--out-dir",
        default=_default_out_dir(),
        help="output directory (default: $NUINDEX_OUT_DIR or '.')",
    )


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--folds", type=int, default=10, help="CV folds")
    parser.add_argument("--n-lambda", type=int, default=100, help="penalty grid size")
    parser.add_argument(
        "--min-ratio", type=float, default=0.01, help="smallest/largest penalty ratio"
    )
    parser.add_argument(
        "--rule", choices=("one_se", "min"), default="one_se", help="penalty selection rule"
    )
    parser.add_argument(
        "--cv-loss",
        choices=("deviance", "misclassification"),
        default="deviance",
        help="cross-validation loss",
    )
    parser.add_argument("--seed", type=int, default=0, help="fold-assignment seed")
    parser.add_argument(
        "--weights",
        action="store_true",
        help="use stratum-balancing weights (needs z_ columns)",
    )


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        use_weights=args.weights,
        folds=args.folds,
        n_lambda=args.n_lambda,
        min_ratio=args.min_ratio,
        rule=args.rule,
        loss=args.cv_loss,
        seed=args.seed,
    )


def _cmd_simulate(args) -> int:
    scenarios = datagen.builtin_scenarios()
    if args.config:
        with open(args.config) as handle:
            scenarios.update(datagen.scenarios_from_config(handle.read()))
    if args.list_scenarios:
        for name in scenarios:
            print(name)
        return 0
    if args.emit_config:
        with open(args.emit_config, "w") as handle:
            handle.write(datagen.scenarios_to_config(scenarios))
        print(args.emit_config)
        return 0
    if not args.scenario:
        raise NuindexError("--scenario is required (see --list-scenarios)")
    if args.scenario not in scenarios:
        raise NuindexError(f"unknown scenario {args.scenario!r}")
    spec = scenarios[args.scenario]
    import dataclasses

    overrides = {"seed": args.seed}
    if args.n is not None:
        overrides["n"] = args.n
    spec = dataclasses.replace(spec, **overrides)
    cohort = datagen.sample_cohort(spec)
    out = args.out or _out_path(args, f"{args.scenario}.csv")
    datagen.write_cohort_csv(cohort, out, include_latent=args.include_latent)
    print(out)
    return 0


def _parse_study_config(path: str) -> dict:
    parser = configparser.ConfigParser()
    with open(path) as handle:
        parser.read_string(handle.read())
    values: dict = {}
    if parser.has_section("study"):
        sec = parser["study"]
        if "scenarios" in sec:
            values["scenarios"] = tuple(
                s.strip() for s in sec["scenarios"].split(",") if s.strip()
            )
        for key, getter in (
            ("replicates", sec.getint),
            ("n", sec.getint),
            ("master_seed", sec.getint),
            ("workers", sec.getint),
            ("folds", sec.getint),
            ("n_lambda", sec.getint),
        ):
            if key in sec:
                values[key] = getter(key)
        if "min_ratio" in sec:
            values["min_ratio"] = sec.getfloat("min_ratio")
        for key in ("arms", "rule", "loss", "out_dir"):
            if key in sec:
                values[key] = sec[key]
    with open(path) as handle:
        inline = datagen.scenarios_from_config(handle.read())
    if inline:
        values["catalog"] = inline
    return values


_SCENARIO_SETS = {
    "main9": tuple(
        f"{level}_{kind}"
        for level in ("low", "medium", "high")
        for kind in ("uncorrelated", "non_group_sparse", "group_sparse")
    ),
    "medium3": (
        "medium_uncorrelated",
        "medium_non_group_sparse",
        "medium_group_sparse",
    ),
    "confounding6": tuple(
        f"confound_{label}_{sign}"
        for label in ("none", "nonoverlap", "overlap")
        for sign in ("negative", "positive")
    ),
}
_SCENARIO_SETS["all15"] = _SCENARIO_SETS["main9"] + _SCENARIO_SETS["confounding6"]


def _cmd_study(args) -> int:
    values: dict = {}
    if args.config:
        values = _parse_study_config(args.config)
    if args.scenarios:
        names: list[str] = []
        for token in args.scenarios.split(","):
            token = token.strip()
            if not token:
                continue
            names.extend(_SCENARIO_SETS.get(token, (token,)))
        values["scenarios"] = tuple(names)
    for key in ("replicates", "n", "master_seed", "workers", "folds", "n_lambda"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    if args.min_ratio is not None:
        values["min_ratio"] = args.min_ratio
    if args.arms is not None:
        values["arms"] = args.arms
    if args.rule is not None:
        values["rule"] = args.rule
    if args.cv_loss is not None:
        values["loss"] = args.cv_loss
    out_dir = args.out_dir or values.pop("out_dir", None) or _default_out_dir()
    values.pop("out_dir", None)
    if "scenarios" not in values:
        raise NuindexError("no scenarios given (use --scenarios or a config file)")
    config = harness.StudyConfig(**values)
    result = harness.run_study(config)
    paths = harness.write_study_outputs(result, out_dir)
    for path in paths.values():
        print(path)
    return 0


def _cmd_fit(args) -> int:
    cohort = datagen.ingest_cohort_csv(args.cohort)
    config = _pipeline_config(args)
    if config.use_weights and not cohort.z_values:
        raise NuindexError(
            "balancing weights requested but the cohort has no stratum (z_) columns"
        )
    fit, model, _ = metrics.fit_index_pipeline(cohort, config)
    coef_path = _out_path(args, "coefficients.csv")
    with open(coef_path, "w", newline="") as handle:
        handle.write("feature,raw_coefficient,selected_flag\n")
        for name, coef in zip(model.feature_names, model.raw_coefficients):
            handle.write(f"{name},{float(coef)!r},{int(coef != 0.0)}\n")
    profile_path = _out_path(args, "cv_profile.csv")
    with open(profile_path, "w", newline="") as handle:
        handle.write("lambda,mean_error,se,nonzero_count\n")
        for lam, err, se, nz in zip(
            fit.lambdas, fit.cv_error, fit.cv_se, fit.nonzero_path
        ):
            handle.write(f"{lam:.6g},{err:.6g},{se:.6g},{int(nz)}\n")
    print(coef_path)
    print(profile_path)
    return 0


def _read_coefficients(path: str) -> tuple[tuple[str, ...], np.ndarray]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {
            "feature",
            "raw_coefficient",
        } <= set(reader.fieldnames):
            raise SchemaError(
                f"{path}: expected columns feature, raw_coefficient"
            )
        names, values = [], []
        for row in reader:
            names.append(row["feature"])
            values.append(float(row["raw_coefficient"]))
    if not names:
        raise SchemaError(f"{path}: no coefficient rows")
    return tuple(names), np.asarray(values)


def _cmd_index(args) -> int:
    names, raw = _read_coefficients(args.coefficients)
    cohort = datagen.ingest_cohort_csv(args.cohort)
    if cohort.feature_names != names:
        raise SchemaError(
            "coefficient features do not match the cohort's feature columns"
        )
    from .index import integer_weight

    model = IndexModel(
        weights=np.asarray([integer_weight(c) for c in raw]),
        raw_coefficients=raw,
        feature_names=names,
    )
    scores = score(model, cohort.features)
    counts = symptom_count(cohort.features)
    out = args.out or _out_path(args, "scores.csv")
    with open(out, "w", newline="") as handle:
        handle.write("id,infected,index,symptom_count\n")
        for i in range(cohort.n):
            handle.write(
                f"{cohort.ids[i]},{int(cohort.infected[i])},"
                f"{int(scores[i])},{int(counts[i])}\n"
            )
    print(out)
    return 0


def _read_scores(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        needed = {"infected", "index", "symptom_count"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise SchemaError(
                f"{path}: expected columns infected, index, symptom_count"
            )
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no score rows")
    return {
        "infected": np.asarray([int(r["infected"]) for r in rows]),
        "index": np.asarray([float(r["index"]) for r in rows]),
        "symptom_count": np.asarray([float(r["symptom_count"]) for r in rows]),
    }


def _cmd_metrics(args) -> int:
    data = _read_scores(args.scores)
    out = args.out or _out_path(args, "metrics.csv")
    with open(out, "w", newline="") as handle:
        handle.write("scorer,auc,aucpr,wilcoxon_z\n")
        for scorer in ("index", "symptom_count"):
            scores = data[scorer]
            handle.write(
                f"{scorer},{metrics.auc(scores, data['infected']):.6g},"
                f"{metrics.aucpr(scores, data['infected']):.6g},"
                f"{metrics.wilcoxon_statistic(scores, data['infected']):.6g}\n"
            )
    print(out)
    return 0


def _cmd_curve(args) -> int:
    data = _read_scores(args.scores)
    curve = metrics.threshold_curve(data[args.scorer], data["infected"])
    out = args.out or _out_path(args, "curve.csv")
    with open(out, "w", newline="") as handle:
        handle.write("threshold,rate_infected,rate_uninfected,fold\n")
        for t, r1, r0 in zip(
            curve.thresholds, curve.rate_infected, curve.rate_uninfected
        ):
            handle.write(f"{t:.6g},{r1:.6g},{r0:.6g},all\n")
    print(out)
    return 0


def _cmd_theory(args) -> int:
    design = theory.ConfounderDesign(pz=args.pz, rr_az=args.rr_az, rr_xz=args.rr_xz)
    start, stop, count = args.beta1_grid
    grid = np.linspace(start, stop, int(count))
    table = theory.confounding_curve(args.alpha, args.pi, args.beta0, grid, design)
    curve_path = _out_path(args, "theory_curve.csv")
    with open(curve_path, "w", newline="") as handle:
        handle.write("beta1,or_unconfounded,or_unadjusted,or_weighted\n")
        for i in range(grid.size):
            handle.write(
                f"{table['beta1'][i]:.6g},{table['or_unconfounded'][i]:.6g},"
                f"{table['or_unadjusted'][i]:.6g},{table['or_weighted'][i]:.6g}\n"
            )
    print(curve_path)
    region_path = _out_path(args, "theory_region.csv")
    pis = np.linspace(0.01, 0.49, args.region_resolution)
    beta0s = np.linspace(0.01, 0.99, args.region_resolution)
    with open(region_path, "w", newline="") as handle:
        handle.write("pi,beta0,in_region\n")
        for p in pis:
            for b in beta0s:
                flag = int(theory.always_attenuated_region(float(p), float(b)))
                handle.write(f"{p:.6g},{b:.6g},{flag}\n")
    print(region_path)
    return 0


def _cmd_pipeline(args) -> int:
    paths = harness.run_pipeline(
        args.cohort,
        config=_pipeline_config(args),
        out_dir=args.out_dir,
        curve_folds=args.curve_folds,
    )
    for path in paths.values():
        print(path)
    return 0


def _float_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected START:STOP:COUNT")
    return float(parts[0]), float(parts[1]), float(parts[2])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nuindex",
        description="Negative-unlabeled indexing toolkit for latent "
        "post-infection conditions.",
    )
    parser.add_argument("--version", action="version", version=f"nuindex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic cohort CSV")
    p.add_argument("--scenario", help="catalog scenario name")
    p.add_argument("--n", type=int, default=None, help="cohort size override")
    p.add_argument("--seed", type=int, default=0, help="cohort seed")
    p.add_argument("--out", help="output CSV path")
    p.add_argument(
        "--include-latent", action="store_true", help="include the y_latent column"
    )
    p.add_argument("--config", help="INI file with extra scenario definitions")
    p.add_argument(
        "--list-scenarios", action="store_true", help="list scenario names and exit"
    )
    p.add_argument(
        "--emit-config", metavar="PATH", help="write the catalog as an INI file"
    )
    _add_out_dir(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("study", help="run a replicated simulation study")
    p.add_argument(
        "--scenarios",
        help="comma-separated scenario names or sets "
        f"({', '.join(sorted(_SCENARIO_SETS))})",
    )
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="per-cohort size")
    p.add_argument("--master-seed", dest="master_seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--arms", choices=("unadjusted", "balancing", "both", "auto"))
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--n-lambda", dest="n_lambda", type=int, default=None)
    p.add_argument("--min-ratio", dest="min_ratio", type=float, default=None)
    p.add_argument("--rule", choices=("one_se", "min"), default=None)
    p.add_argument(
        "--cv-loss",
        dest="cv_loss",
        choices=("deviance", "misclassification"),
        default=None,
    )
    p.add_argument("--config", help="INI study config (see README)")
    p.add_argument("--out-dir", default=None, help="output directory")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("fit", help="cross-validated penalized fit on a cohort CSV")
    p.add_argument("--cohort", required=True)
    _add_fit_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("index", help="score a cohort with a coefficients CSV")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", help="scores CSV path")
    _add_out_dir(p)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("metrics", help="discrimination metrics from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", help="metrics CSV path")
    _add_out_dir(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("curve", help="threshold curve from a scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument(
        "--scorer", choices=("index", "symptom_count"), default="index"
    )
    p.add_argument("--out", help="curve CSV path")
    _add_out_dir(p)
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("theory", help="exact odds-ratio curves and region grid")
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--pi", type=float, default=0.25)
    p.add_argument("--beta0", type=float, default=0.2)
    p.add_argument(
        "--beta1-grid",
        dest="beta1_grid",
        type=_float_triple,
        default=(0.1, 3.5, 69),
        help="risk-ratio grid as START:STOP:COUNT (must stay feasible "
        "for the confounded strata)",
    )
    p.add_argument("--pz", type=float, default=0.55)
    p.add_argument("--rr-az", dest="rr_az", type=float, default=1.7)
    p.add_argument("--rr-xz", dest="rr_xz", type=float, default=2.0)
    p.add_argument("--region-resolution", type=int, default=50)
    _add_out_dir(p)
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("pipeline", help="full fit/index/curve pipeline on a cohort")
    p.add_argument("--cohort", required=True)
    p.add_argument("--curve-folds", type=int, default=10)
    _add_fit_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NuindexError as exc:
        print(f"nuindex: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
