"""Command-line entry point: each pipeline stage is a subcommand.

Exit codes: 0 success, 1 usage error, 2 data error, 3 a solver did not
converge (the flagged results are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .artifact import load_artifact, save_artifact
from .cohort import SynthSpec, generate_synthetic_cohort, load_cohort, save_cohort, validate_cohort
from .errors import ConvergenceWarning, InvalidSpec, IoFailure, ScreeningError, UnreachableRecall
from .evaluation import Algorithm, grid_search, stratified_kfold
from .pipeline import Placement, PipelineConfig, run_pipeline, run_selection, top_features, vectorize
from .prescreen import derive_prescreen_rules
from .reporting import (
    eval_reports_tsv,
    eval_summary_text,
    selection_tsv,
    top_features_text,
    top_features_tsv,
)
from .vectorizer import dumps_manifest

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UNCONVERGED = 0, 1, 2, 3

log = logging.getLogger("rarescreen")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config ---------------------------------------------------------------------


def load_config(args) -> PipelineConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    data = dict(data)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.cv_k is not None:
        data["cv_k"] = args.cv_k
    if args.kinds is not None:
        data["enabled_feature_kinds"] = [k for k in args.kinds.split(",") if k.strip()]
    if args.notes:
        kinds = set(data.get("enabled_feature_kinds", [str(k) for k in PipelineConfig().enabled_feature_kinds]))
        data["enabled_feature_kinds"] = sorted(kinds | {"unigram", "bigram"})
    sel = dict(data.get("selection", {}))
    if args.select is not None:
        sel["enabled"] = args.select
    if args.placement is not None:
        sel["placement"] = args.placement
    if args.lambda_ is not None:
        sel["lambda"] = args.lambda_
    if sel:
        data["selection"] = sel
    if args.algorithms:
        grids = PipelineConfig.from_dict(data).to_dict()["grids"] if data else PipelineConfig().to_dict()["grids"]
        wanted = [a.strip() for a in args.algorithms.split(",") if a.strip()]
        for a in wanted:
            if a not in grids:
                raise UsageError(f"unknown algorithm {a!r}; choose from {', '.join(x.value for x in Algorithm)}")
        data["grids"] = {a: grids[a] for a in wanted}
    try:
        return PipelineConfig.from_dict(data)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# -- subcommands ------------------------------------------------------------------


def cmd_generate(args, config):
    spec = {}
    if args.spec:
        try:
            spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read generator spec {args.spec}: {exc}") from None
    for key in ("n_positive", "n_negative", "noise_presence_rate", "notes_per_patient"):
        if getattr(args, key) is not None:
            spec[key] = getattr(args, key)
    if args.synth_seed is not None:
        spec["seed"] = args.synth_seed
    try:
        synth = SynthSpec.from_dict(spec)
    except (TypeError, ValueError) as exc:
        raise InvalidSpec(str(exc)) from exc
    cohort = generate_synthetic_cohort(synth)
    if args.out in (None, "-"):
        from .cohort import dumps_cohort

        sys.stdout.write(dumps_cohort(cohort))
    else:
        save_cohort(cohort, args.out)
    log.info("generated %d records", len(cohort))
    return EXIT_OK


def cmd_validate(args, config):
    cohort = load_cohort(args.cohort)
    violations = validate_cohort(cohort)
    _write(args.out, "".join(f"{v}\n" for v in violations))
    if violations:
        log.warning("%d violation(s)", len(violations))
        return EXIT_DATA
    log.info("%d records valid", len(cohort))
    return EXIT_OK


def cmd_vectorize(args, config):
    matrix = vectorize(load_cohort(args.cohort), config)
    lines = []
    for pid, label, row in zip(matrix.patient_ids, matrix.labels, matrix.rows):
        lines.append(f"{pid}\t{int(label)}\t{' '.join(map(str, row.active))}\n")
    _write(args.manifest, dumps_manifest(matrix.feature_space))
    _write(args.out, "".join(lines))
    log.info("matrix %d x %d", *matrix.shape)
    return EXIT_OK


def cmd_select(args, config):
    matrix = vectorize(load_cohort(args.cohort), config)
    selection = run_selection(matrix, config)
    _write(args.out, selection_tsv(selection, matrix.feature_space))
    if args.top_out:
        _write(args.top_out, top_features_tsv(top_features(selection, matrix.feature_space, args.top)))
    log.info("kept %d of %d columns, lambda=%g", len(selection.kept_columns), matrix.shape[1], selection.lambda_)
    return EXIT_OK if selection.converged else EXIT_UNCONVERGED


def cmd_grid_search(args, config):
    cohort = load_cohort(args.cohort)
    if config.selection.enabled:
        result = run_pipeline(cohort, config, n_jobs=args.jobs)
        reports, flagged = result.reports, result.unconverged
    else:
        matrix = vectorize(cohort, config)
        folds = stratified_kfold(matrix.labels, config.cv_k, config.seed)
        reports = {a: grid_search(matrix, g, folds=folds, n_jobs=args.jobs) for a, g in config.grids.items()}
        flagged = sum(r.unconverged for r in reports.values())
    _write(args.out, eval_reports_tsv(reports))
    if args.summary:
        _write(args.summary, eval_summary_text(reports))
    return EXIT_UNCONVERGED if flagged else EXIT_OK


def cmd_train(args, config):
    result = run_pipeline(load_cohort(args.cohort), config, n_jobs=args.jobs)
    save_artifact(result.artifact, args.out)
    log.info("best %s (%s)", result.best_algorithm.value, result.artifact.config.label())
    return EXIT_UNCONVERGED if result.unconverged else EXIT_OK


def cmd_report(args, config):
    """Full run writing every output into one directory."""
    cohort = load_cohort(args.cohort)
    if not config.selection.enabled:
        config = config.with_selection(True)
    result = run_pipeline(cohort, config, n_jobs=args.jobs)
    top = top_features(result.selection, result.feature_space, args.top)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnreachableRecall)
        rules = derive_prescreen_rules(cohort, top, args.target_recall, config.vectorizer)
    out = Path(args.out_dir)
    _write(out / "eval_report.tsv", eval_reports_tsv(result.reports))
    _write(out / "eval_summary.txt", eval_summary_text(result.reports))
    _write(out / "selection.tsv", selection_tsv(result.selection, result.feature_space))
    _write(out / "top_features.tsv", top_features_tsv(top))
    _write(out / "top_features.txt", top_features_text(top))
    _write(out / "prescreen.txt", rules.to_text())
    _write(out / "config.json", json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    save_artifact(result.artifact, out / "model.json")
    return EXIT_UNCONVERGED if result.unconverged else EXIT_OK


def cmd_prescreen(args, config):
    cohort = load_cohort(args.cohort)
    matrix = vectorize(cohort, config)
    selection = run_selection(matrix, config)
    top = top_features(selection, matrix.feature_space, args.top)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnreachableRecall)
        rules = derive_prescreen_rules(cohort, top, args.target_recall, config.vectorizer)
    for w in caught:
        log.warning("%s", w.message)
    _write(args.out, rules.to_text())
    return EXIT_OK if selection.converged else EXIT_UNCONVERGED


def cmd_predict(args, config):
    artifact = load_artifact(args.model)
    cohort = load_cohort(args.cohort)
    pred = artifact.predict_records(list(cohort)) if len(cohort) else []
    _write(args.out, "".join(f"{r.patient_id}\t{'positive' if p else 'negative'}\n" for r, p in zip(cohort, pred)))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("pipeline config overrides")
    g.add_argument("--config", help="JSON file with PipelineConfig fields")
    g.add_argument("--seed", type=int)
    g.add_argument("--cv-k", type=int, dest="cv_k")
    g.add_argument("--kinds", help="comma-separated feature kinds, e.g. demographic,diagnosis")
    g.add_argument("--notes", action="store_true", help="also enable unigram and bigram note features")
    g.add_argument("--select", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--placement", choices=[p.value for p in Placement])
    g.add_argument("--lambda", type=float, dest="lambda_")
    g.add_argument("--algorithms", help="comma-separated subset of algorithms to grid-search")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for grid search")
    g.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="rarescreen", description="Rare-disease screening pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic cohort")
    p.add_argument("--out")
    p.add_argument("--spec", help="JSON generator spec")
    p.add_argument("--n-positive", type=int, dest="n_positive")
    p.add_argument("--n-negative", type=int, dest="n_negative")
    p.add_argument("--noise-rate", type=float, dest="noise_presence_rate")
    p.add_argument("--notes-per-patient", type=int, dest="notes_per_patient")
    p.add_argument("--synth-seed", type=int, dest="synth_seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", parents=[common], help="check cohort invariants")
    p.add_argument("cohort")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("vectorize", parents=[common], help="write the feature manifest and sparse matrix")
    p.add_argument("cohort")
    p.add_argument("--out", help="matrix rows: patient_id, label, active columns")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("select", parents=[common], help="near-constant filter plus L1 selection")
    p.add_argument("cohort")
    p.add_argument("--out")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--top-out", dest="top_out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("grid-search", parents=[common], help="cross-validated grid search")
    p.add_argument("cohort")
    p.add_argument("--out")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("train", parents=[common], help="fit the overall best model and save it")
    p.add_argument("cohort")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", parents=[common], help="full run writing every report")
    p.add_argument("cohort")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--target-recall", type=float, default=1.0, dest="target_recall")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("prescreen", parents=[common], help="derive high-recall prescreen rules")
    p.add_argument("cohort")
    p.add_argument("--out")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--target-recall", type=float, default=1.0, dest="target_recall")
    p.set_defaults(func=cmd_prescreen)

    p = sub.add_parser("predict", parents=[common], help="score records with a saved model")
    p.add_argument("model")
    p.add_argument("cohort")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if hasattr(args, "target_recall") and not 0 < args.target_recall <= 1:
            raise UsageError("--target-recall must be in (0, 1]")
        config = load_config(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            code = args.func(args, config)
        for w in caught:
            warnings.showwarning(w.message, w.category, w.filename, w.lineno)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            code = max(code, EXIT_UNCONVERGED)
        return code
    except UsageError as exc:
        print(f"rarescreen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScreeningError as exc:
        print(f"rarescreen: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
