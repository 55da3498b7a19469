"""Versioned JSON model artifacts.

An artifact bundles the feature manifest, the selection mask, the chosen
configuration, the fitted model and a snapshot of the pipeline config.
Floats are written with ``repr`` precision so reloaded models predict
bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basic_classifiers import KnnModel, NbModel, Weighting
from .cohort import PatientRecord
from .errors import CorruptArtifact, IoFailure, VersionMismatch
from .evaluation import Algorithm, ModelConfig
from .svm import KernelSpec, SvmModel
from .trees import AdaBoostModel, Criterion, Decision, ForestModel, Leaf, TreeModel
from .vectorizer import FeatureSpace, dumps_manifest, loads_manifest, vectorize_record

FORMAT_NAME = "rarescreen-artifact"
FORMAT_VERSION = 1


# -- trees as preorder text ----------------------------------------------------
# "D<feature>" is followed by its absent then present subtree; "L<label>:<neg>,<pos>" is a leaf.


def dumps_tree(node) -> str:
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Leaf):
            out.append(f"L{n.label}:{n.class_counts[0]},{n.class_counts[1]}")
        else:
            out.append(f"D{n.feature}")
            stack.append(n.present)
            stack.append(n.absent)
    return " ".join(out)


def loads_tree(text: str):
    tokens = iter(text.split())

    def parse():
        tok = next(tokens)
        if tok[0] == "L":
            label, counts = tok[1:].split(":")
            neg, pos = counts.split(",")
            return Leaf(int(label), (int(neg), int(pos)))
        if tok[0] == "D":
            feature = int(tok[1:])
            absent = parse()
            return Decision(feature, absent, parse())
        raise ValueError(f"bad tree token {tok!r}")

    root = parse()
    if next(tokens, None) is not None:
        raise ValueError("trailing tokens after tree")
    return root


# -- row storage ----------------------------------------------------------------


def _dump_rows(X) -> dict:
    X = np.asarray(X)
    if X.size == 0 or np.isin(X, (0, 1)).all():
        return {"binary": True, "active": [np.flatnonzero(r).tolist() for r in X], "dimension": int(X.shape[1])}
    return {"binary": False, "values": [[float(v) for v in r] for r in X], "dimension": int(X.shape[1])}


def _load_rows(obj) -> np.ndarray:
    if obj["binary"]:
        X = np.zeros((len(obj["active"]), obj["dimension"]), dtype=np.float64)
        for i, act in enumerate(obj["active"]):
            X[i, act] = 1.0
        return X
    return np.array(obj["values"], dtype=np.float64).reshape(-1, obj["dimension"])


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a).ravel()]


def dump_model(model) -> dict:
    if isinstance(model, KnnModel):
        return {"type": "knn", "rows": _dump_rows(model.X), "labels": model.y.tolist(),
                "k": model.k, "weighting": model.weighting.value}
    if isinstance(model, NbModel):
        d = model.dimension
        return {"type": "naive_bayes", "dimension": d, "smoothing_alpha": model.smoothing_alpha,
                "log_prior": _floats(model.log_prior),
                "log_likelihood_present": _floats(model.log_likelihood_present),
                "log_likelihood_absent": _floats(model.log_likelihood_absent)}
    if isinstance(model, SvmModel):
        rows = model.support_rows.reshape(-1, model.dimension)
        return {"type": "svm", "dimension": model.dimension, "support_rows": _dump_rows(rows),
                "support_labels": _floats(model.support_labels), "alphas": _floats(model.alphas),
                "bias": float(model.bias), "kernel": model.kernel.kind.value, "gamma": float(model.kernel.gamma),
                "c": model.c, "converged": model.converged, "kkt_residual": float(model.kkt_residual)}
    if isinstance(model, TreeModel):
        return {"type": "decision_tree", "dimension": model.dimension, "criterion": model.criterion.value,
                "tree": dumps_tree(model.root)}
    if isinstance(model, ForestModel):
        return {"type": "random_forest", "dimension": model.dimension, "criterion": model.criterion.value,
                "n_estimators": model.n_estimators, "seed": model.seed,
                "feature_subsample_size": model.feature_subsample_size,
                "trees": [dumps_tree(t) for t in model.trees]}
    if isinstance(model, AdaBoostModel):
        return {"type": "adaboost", "dimension": model.dimension, "stumps": [list(s) for s in model.stumps],
                "alphas": list(model.alphas), "training_errors": list(model.training_errors)}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def load_model(obj):
    kind = obj["type"]
    if kind == "knn":
        return KnnModel(_load_rows(obj["rows"]), np.array(obj["labels"], dtype=np.int8), obj["k"],
                        Weighting(obj["weighting"]))
    if kind == "naive_bayes":
        d = obj["dimension"]
        return NbModel(np.array(obj["log_prior"]),
                       np.array(obj["log_likelihood_present"]).reshape(2, d),
                       np.array(obj["log_likelihood_absent"]).reshape(2, d),
                       obj["smoothing_alpha"])
    if kind == "svm":
        return SvmModel(_load_rows(obj["support_rows"]), np.array(obj["support_labels"]), np.array(obj["alphas"]),
                        obj["bias"], KernelSpec(obj["kernel"], obj["gamma"]), obj["c"], obj["dimension"],
                        obj["converged"], obj["kkt_residual"])
    if kind == "decision_tree":
        return TreeModel(loads_tree(obj["tree"]), obj["dimension"], Criterion(obj["criterion"]))
    if kind == "random_forest":
        return ForestModel(tuple(loads_tree(t) for t in obj["trees"]), obj["dimension"], obj["n_estimators"],
                           Criterion(obj["criterion"]), obj["seed"], obj["feature_subsample_size"])
    if kind == "adaboost":
        return AdaBoostModel(tuple((int(f), int(p)) for f, p in obj["stumps"]), tuple(obj["alphas"]),
                             tuple(obj["training_errors"]), obj["dimension"])
    raise ValueError(f"unknown model type {kind!r}")


# -- artifact -------------------------------------------------------------------


@dataclass(frozen=True)
class ModelArtifact:
    feature_space: FeatureSpace
    selection_mask: tuple[int, ...] | None
    config: ModelConfig
    model: object
    pipeline_config: object  # PipelineConfig
    format_version: int = FORMAT_VERSION

    def _columns(self):
        return list(self.selection_mask) if self.selection_mask is not None else slice(None)

    def predict(self, X) -> np.ndarray:
        """Predict from rows in the full feature space (the mask is applied here)."""
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        return self.model.predict(X[:, self._columns()])

    def predict_records(self, records: list[PatientRecord]) -> np.ndarray:
        X = np.zeros((len(records), len(self.feature_space)), dtype=np.uint8)
        for i, rec in enumerate(records):
            X[i, list(vectorize_record(rec, self.feature_space).active)] = 1
        return self.predict(X)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "format_version": self.format_version,
            "feature_manifest": dumps_manifest(self.feature_space),
            "selection_mask": list(self.selection_mask) if self.selection_mask is not None else None,
            "algorithm": self.config.algorithm.value,
            "params": [[k, v] for k, v in self.config.params],
            "model": dump_model(self.model),
            "pipeline_config": self.pipeline_config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ModelArtifact:
        from .pipeline import PipelineConfig

        if not isinstance(data, dict) or data.get("format") != FORMAT_NAME:
            raise CorruptArtifact("not a model artifact")
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionMismatch(version, FORMAT_VERSION)
        try:
            pconf = PipelineConfig.from_dict(data["pipeline_config"])
            space = loads_manifest(data["feature_manifest"], pconf.vectorizer)
            mask = data["selection_mask"]
            config = ModelConfig(Algorithm(data["algorithm"]), tuple((k, v) for k, v in data["params"]))
            model = load_model(data["model"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise CorruptArtifact(f"artifact content is invalid: {exc}") from exc
        return cls(space, tuple(mask) if mask is not None else None, config, model, pconf, version)


def dumps_artifact(artifact: ModelArtifact) -> str:
    return json.dumps(artifact.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def loads_artifact(text: str) -> ModelArtifact:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptArtifact(f"artifact is not valid JSON: {exc.msg}") from None
    return ModelArtifact.from_dict(data)


def save_artifact(artifact: ModelArtifact, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_artifact(artifact))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_artifact(path) -> ModelArtifact:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return loads_artifact(text)
