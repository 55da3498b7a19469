"""End-to-end orchestration: vectorize, select, grid-search, fit the overall best."""

from __future__ import annotations

import enum
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

from .cohort import Cohort
from .errors import ScreeningError, SingleClass, StageError
from .evaluation import DEFAULT_GRIDS, Algorithm, EvalReport, ParamGrid, grid_search, stratified_kfold
from .selection import SelectionConfig, SelectionResult, select_features
from .vectorizer import (
    NOTE_KINDS,
    DesignMatrix,
    FeatureDescriptor,
    FeatureKind,
    FeatureSpace,
    VectorizerConfig,
    build_feature_space,
    vectorize_cohort,
)

log = logging.getLogger(__name__)

DEFAULT_KINDS = frozenset(set(FeatureKind) - set(NOTE_KINDS))


class Placement(str, enum.Enum):
    PER_FOLD = "per_fold"
    GLOBAL = "global"


@dataclass(frozen=True)
class SelectionStage:
    enabled: bool = False
    placement: Placement = Placement.PER_FOLD
    config: SelectionConfig = field(default_factory=SelectionConfig)

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement(self.placement))


@dataclass(frozen=True)
class PipelineConfig:
    vectorizer: VectorizerConfig = field(default_factory=VectorizerConfig)
    selection: SelectionStage = field(default_factory=SelectionStage)
    grids: Mapping[Algorithm, ParamGrid] = field(default_factory=lambda: dict(DEFAULT_GRIDS))
    cv_k: int = 10
    seed: int = 0
    enabled_feature_kinds: frozenset[FeatureKind] = DEFAULT_KINDS

    def __post_init__(self):
        if self.cv_k < 2:
            raise ValueError("cv_k must be >= 2")
        kinds = frozenset(FeatureKind.parse(k) for k in self.enabled_feature_kinds)
        if not kinds:
            raise ValueError("at least one feature kind must be enabled")
        object.__setattr__(self, "enabled_feature_kinds", kinds)
        # keep grids in reporting order
        grids = {Algorithm(a): g for a, g in self.grids.items()}
        object.__setattr__(self, "grids", {a: grids[a] for a in Algorithm if a in grids})

    def with_selection(self, enabled=True, placement=None) -> PipelineConfig:
        stage = replace(self.selection, enabled=enabled, placement=placement or self.selection.placement)
        return replace(self, selection=stage)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        v = self.vectorizer
        s = self.selection
        return {
            "vectorizer": {
                "age_bin_width": v.age_bin_width,
                "stopwords": sorted(v.stopwords),
                "numeric_placeholder": v.numeric_placeholder,
                "max_doc_frequency": v.max_doc_frequency,
                "min_doc_count": v.min_doc_count,
            },
            "selection": {
                "enabled": s.enabled,
                "placement": s.placement.value,
                "majority_threshold": s.config.majority_threshold,
                "lambda": s.config.lambda_,
                "max_iterations": s.config.max_iterations,
                "tolerance": s.config.tolerance,
            },
            "grids": {a.value: {name: list(vals) for name, vals in g.axes} for a, g in self.grids.items()},
            "cv_k": self.cv_k,
            "seed": self.seed,
            "enabled_feature_kinds": sorted(str(k) for k in self.enabled_feature_kinds),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> PipelineConfig:
        known = {"vectorizer", "selection", "grids", "cv_k", "seed", "enabled_feature_kinds"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        kw = {}
        if "vectorizer" in data:
            vec = dict(data["vectorizer"])
            if "stopwords" in vec:
                vec["stopwords"] = frozenset(vec["stopwords"])
            kw["vectorizer"] = VectorizerConfig(**vec)
        if "selection" in data:
            sel = dict(data["selection"])
            stage = {k: sel.pop(k) for k in ("enabled", "placement") if k in sel}
            if "lambda" in sel:
                sel["lambda_"] = sel.pop("lambda")
            kw["selection"] = SelectionStage(config=SelectionConfig(**sel), **stage)
        if "grids" in data:
            grids = {}
            for name, axes in data["grids"].items():
                alg = Algorithm(name)
                # axis order follows the default grid where names match, else file order
                default_order = [n for n, _ in DEFAULT_GRIDS[alg].axes]
                names = sorted(axes, key=lambda n: default_order.index(n) if n in default_order else len(default_order))
                grids[alg] = ParamGrid(alg, tuple((n, tuple(axes[n])) for n in names))
            kw["grids"] = grids
        for key in ("cv_k", "seed"):
            if key in data:
                kw[key] = int(data[key])
        if "enabled_feature_kinds" in data:
            kw["enabled_feature_kinds"] = frozenset(FeatureKind.parse(k) for k in data["enabled_feature_kinds"])
        return cls(**kw)


@dataclass(frozen=True)
class PipelineResult:
    reports: dict[Algorithm, EvalReport]
    artifact: object  # ModelArtifact
    feature_space: FeatureSpace
    matrix: DesignMatrix
    selection: SelectionResult | None
    config: PipelineConfig

    @property
    def best_algorithm(self) -> Algorithm:
        # max() keeps the first maximum, so ties follow Algorithm order
        return max(self.reports, key=lambda a: self.reports[a].best_mean_f1)

    @property
    def unconverged(self) -> int:
        n = sum(r.unconverged for r in self.reports.values())
        if self.selection is not None and not self.selection.converged:
            n += 1
        return n


def vectorize(cohort: Cohort, config: PipelineConfig) -> DesignMatrix:
    space = build_feature_space(cohort, config.vectorizer, config.enabled_feature_kinds)
    return vectorize_cohort(cohort, space)


def run_selection(matrix: DesignMatrix, config: PipelineConfig) -> SelectionResult:
    return select_features(matrix.X, matrix.labels, config.selection.config, cv_k=config.cv_k, seed=config.seed)


def run_pipeline(
    cohort: Cohort, config: PipelineConfig | None = None, n_jobs: int = 1, fold_hook=None
) -> PipelineResult:
    """Vectorize, optionally select, grid-search every enabled algorithm, fit the best.

    With global placement, selection runs once on the whole cohort and every
    fold sees only the kept columns.  With per-fold placement each fold's
    columns are selected from its training rows alone; the final model uses
    a selection fitted on all rows.  ``fold_hook(fold, train_rows, columns)``
    is called for every per-fold selection, for auditing.
    """
    from .artifact import ModelArtifact

    config = config or PipelineConfig()
    try:
        matrix = vectorize(cohort, config)
    except (ScreeningError, ValueError) as exc:
        raise StageError("vectorize", exc) from exc
    y = matrix.labels
    if len(np.unique(y)) < 2:
        raise StageError("vectorize", SingleClass("cohort needs both classes labeled"))

    try:
        folds = stratified_kfold(y, config.cv_k, config.seed)
    except ScreeningError as exc:
        raise StageError("folds", exc) from exc

    selection = None
    columns = list(range(matrix.shape[1]))
    fold_columns = None
    if config.selection.enabled:
        try:
            selection = run_selection(matrix, config)
            columns = list(selection.kept_columns)
            if config.selection.placement is Placement.PER_FOLD:
                fold_columns = []
                for f, (tr, _) in enumerate(folds.splits()):
                    cols = list(select_features(
                        matrix.X[tr], y[tr], config.selection.config, cv_k=config.cv_k, seed=config.seed
                    ).kept_columns)
                    if fold_hook is not None:
                        fold_hook(f, tr, cols)
                    fold_columns.append(cols)
        except ScreeningError as exc:
            raise StageError("select", exc) from exc
        if not columns or (fold_columns is not None and not all(fold_columns)):
            raise StageError("select", ScreeningError("selection kept no columns"))
        log.info("selection kept %d of %d columns (lambda=%g)", len(columns), matrix.shape[1], selection.lambda_)

    eval_data = matrix if fold_columns is not None else matrix.take_columns(columns)
    reports = {}
    for alg, grid in config.grids.items():
        try:
            reports[alg] = grid_search(eval_data, grid, folds=folds, fold_columns=fold_columns, n_jobs=n_jobs)
        except ScreeningError as exc:
            raise StageError(f"grid-search {alg.value}", exc) from exc
        log.info("%s best %s mean F1 %.4f", alg.value, reports[alg].best_config.label(), reports[alg].best_mean_f1)

    best_alg = max(reports, key=lambda a: reports[a].best_mean_f1)
    best_cfg = reports[best_alg].best_config
    try:
        model = best_cfg.fit(matrix.X[:, columns], y, config.seed)
    except ScreeningError as exc:
        raise StageError("train", exc) from exc
    mask = tuple(columns) if config.selection.enabled else None
    artifact = ModelArtifact(matrix.feature_space, mask, best_cfg, model, config)
    return PipelineResult(reports, artifact, matrix.feature_space, matrix, selection, config)


def top_features(selection: SelectionResult, space: FeatureSpace, limit: int = 20) -> list[tuple[FeatureDescriptor, float]]:
    """Kept features by |weight| descending, ties by column id."""
    ranked = sorted(zip(selection.kept_columns, selection.weights), key=lambda cw: (-abs(cw[1]), cw[0]))
    return [(space.descriptors[c], w) for c, w in ranked[: max(limit, 0)]]
