"""Rare-disease patient screening: vectorize records, select features, grid-search classifiers."""

from .artifact import ModelArtifact, load_artifact, save_artifact
from .cohort import Cohort, Label, PatientRecord, SynthSpec, generate_synthetic_cohort, load_cohort, save_cohort
from .evaluation import DEFAULT_GRIDS, Algorithm, EvalReport, ModelConfig, ParamGrid, grid_search, stratified_kfold
from .pipeline import PipelineConfig, Placement, run_pipeline, top_features
from .prescreen import PrescreenRuleSet, derive_prescreen_rules
from .selection import SelectionConfig, SelectionResult, select_features
from .vectorizer import FeatureKind, FeatureSpace, VectorizerConfig, build_feature_space, vectorize_cohort

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "Cohort", "EvalReport", "FeatureKind", "FeatureSpace", "Label", "ModelArtifact", "ModelConfig",
    "ParamGrid", "PatientRecord", "PipelineConfig", "Placement", "PrescreenRuleSet", "SelectionConfig",
    "SelectionResult", "SynthSpec", "DEFAULT_GRIDS", "VectorizerConfig", "build_feature_space",
    "derive_prescreen_rules", "generate_synthetic_cohort", "grid_search", "load_artifact", "load_cohort",
    "run_pipeline", "save_artifact", "save_cohort", "select_features", "stratified_kfold", "top_features",
    "vectorize_cohort",
]
