import numpy as np
import pytest

from rarescreen.errors import StageError
from rarescreen.evaluation import DEFAULT_GRIDS, Algorithm, stratified_kfold
from rarescreen.pipeline import PipelineConfig, Placement, SelectionStage, run_pipeline, top_features
from rarescreen.selection import SelectionConfig, SelectionResult, select_features
from rarescreen.vectorizer import FeatureDescriptor, FeatureKind, FeatureSpace, VectorizerConfig

FAST = {a: DEFAULT_GRIDS[a] for a in (Algorithm.KNN, Algorithm.NAIVE_BAYES, Algorithm.DECISION_TREE)}


def fast_config(**kw):
    return PipelineConfig(grids=FAST, cv_k=3, seed=2, **kw)


def test_raw_run(small_cohort):
    res = run_pipeline(small_cohort, fast_config())
    assert list(res.reports) == list(FAST)
    assert res.selection is None and res.artifact.selection_mask is None
    assert res.best_algorithm in FAST
    assert res.artifact.config == res.reports[res.best_algorithm].best_config
    pred = res.artifact.predict_records(list(small_cohort))
    assert pred.shape == (len(small_cohort),)


def test_per_fold_selection_sees_only_training_rows(small_cohort):
    cfg = fast_config(selection=SelectionStage(True, Placement.PER_FOLD, SelectionConfig(lambda_=0.01)))
    calls = []
    res = run_pipeline(small_cohort, cfg, fold_hook=lambda f, tr, cols: calls.append((f, tr, cols)))
    folds = stratified_kfold(res.matrix.labels, 3, 2)
    assert [c[0] for c in calls] == [0, 1, 2]
    for f, tr, cols in calls:
        assert np.intersect1d(tr, folds.test_indices(f)).size == 0
        assert sorted(tr) == sorted(folds.train_indices(f))
        again = select_features(res.matrix.X[tr], res.matrix.labels[tr], SelectionConfig(lambda_=0.01), cv_k=3, seed=2)
        assert cols == list(again.kept_columns)
    assert res.artifact.selection_mask == res.selection.kept_columns


def test_global_selection_masks_columns(small_cohort):
    cfg = PipelineConfig(grids=FAST, cv_k=3, seed=2).with_selection(True, Placement.GLOBAL)
    res = run_pipeline(small_cohort, cfg)
    assert res.artifact.selection_mask == res.selection.kept_columns
    assert 0 < len(res.selection.kept_columns) < res.matrix.shape[1]


def test_run_is_deterministic(small_cohort):
    a = run_pipeline(small_cohort, fast_config())
    b = run_pipeline(small_cohort, fast_config())
    assert all(a.reports[k].to_tsv() == b.reports[k].to_tsv() for k in FAST)


def test_stage_errors(small_cohort):
    one_class = type(small_cohort)(tuple(r for r in small_cohort if r.label == 0))
    with pytest.raises(StageError) as info:
        run_pipeline(one_class, fast_config())
    assert info.value.stage == "vectorize"
    tiny = type(small_cohort)(tuple(small_cohort.records[:3]))
    with pytest.raises(StageError):
        run_pipeline(tiny, PipelineConfig(grids=FAST, cv_k=10))


def test_top_features_ordering():
    descs = tuple(FeatureDescriptor(FeatureKind.DIAGNOSIS, n) for n in "abcde")
    space = FeatureSpace(descs, VectorizerConfig())
    sel = SelectionResult(kept_columns=(0, 1, 3, 4), weights=(0.5, -2.0, 2.0, 0.1),
                          full_weights=np.array([0.5, -2.0, 0, 2.0, 0.1]), intercept=0.0, lambda_=0.01,
                          converged=True, objective_trace=())
    ranked = top_features(sel, space, limit=3)
    assert [d.name for d, _ in ranked] == ["b", "d", "a"]
    assert top_features(sel, space, limit=0) == []


def test_config_round_trip():
    cfg = PipelineConfig(cv_k=5, seed=9, enabled_feature_kinds=frozenset({FeatureKind.DIAGNOSIS}),
                         grids={Algorithm.KNN: DEFAULT_GRIDS[Algorithm.KNN]}).with_selection(True, Placement.GLOBAL)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    assert PipelineConfig.from_dict(PipelineConfig().to_dict()) == PipelineConfig()
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig(cv_k=1)
