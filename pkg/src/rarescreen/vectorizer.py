"""Turn a cohort into a binary feature space and design matrix.

Structured fields become one indicator column per distinct value, age is
binned into fixed-width ranges ("40-49"), and progress notes become
pruned unigram/bigram presence indicators.
"""

from __future__ import annotations

import enum
import re
import string
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .cohort import FIELD_BY_KIND, MAX_AGE, Cohort, PatientRecord, canonical_entry
from .errors import DimensionMismatch, EmptyCohort, OutOfRange, UnsupportedN


class FeatureKind(enum.IntEnum):
    DEMOGRAPHIC = 0
    DIAGNOSIS = 1
    MEDICATION = 2
    PROBLEM = 3
    SURGICAL = 4
    UNIGRAM = 5
    BIGRAM = 6

    def __str__(self):
        return self.name.lower()

    @classmethod
    def parse(cls, text) -> FeatureKind:
        if isinstance(text, cls):
            return text
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown feature kind {text!r}") from None


STRUCTURED_KINDS = (FeatureKind.DIAGNOSIS, FeatureKind.MEDICATION, FeatureKind.PROBLEM, FeatureKind.SURGICAL)
NOTE_KINDS = (FeatureKind.UNIGRAM, FeatureKind.BIGRAM)
ALL_KINDS = frozenset(FeatureKind)

# A compact English stopword list; callers can pass their own.
DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because been before being below
    between both but by can could did do does doing down during each few for from further had has have
    having he her here hers herself him himself his how i if in into is it its itself just me more most
    my myself no nor not of off on once only or other our ours ourselves out over own same she should so
    some such than that the their theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why will with would you your
    yours yourself yourselves
    """.split()
)

_PUNCT = re.compile("[" + re.escape(string.punctuation) + "]")
_NUMERIC = re.compile(r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)")


@dataclass(frozen=True)
class VectorizerConfig:
    age_bin_width: int = 10
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    numeric_placeholder: str = "<num>"
    max_doc_frequency: float = 0.9
    min_doc_count: int = 2

    def __post_init__(self):
        if self.age_bin_width < 1:
            raise ValueError("age_bin_width must be >= 1")
        if not 0 < self.max_doc_frequency <= 1:
            raise ValueError("max_doc_frequency must lie in (0, 1]")
        if self.min_doc_count < 1:
            raise ValueError("min_doc_count must be >= 1")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))


@dataclass(frozen=True, order=True)
class FeatureDescriptor:
    kind: FeatureKind
    name: str

    def __str__(self):
        return f"{self.kind}:{self.name}"


@dataclass(frozen=True)
class SparseVector:
    """Binary vector stored as its strictly increasing active column ids."""

    dimension: int
    active: tuple[int, ...]

    def __post_init__(self):
        act = tuple(int(i) for i in self.active)
        if any(b <= a for a, b in zip(act, act[1:])):
            raise ValueError("active ids must be strictly increasing")
        if act and (act[0] < 0 or act[-1] >= self.dimension):
            raise ValueError("active id out of range")
        object.__setattr__(self, "active", act)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension, dtype=np.uint8)
        out[list(self.active)] = 1
        return out

    @classmethod
    def from_dense(cls, row) -> SparseVector:
        row = np.asarray(row)
        return cls(row.shape[0], tuple(np.flatnonzero(row)))


@dataclass(frozen=True)
class FeatureSpace:
    descriptors: tuple[FeatureDescriptor, ...]
    build_config: VectorizerConfig = field(default_factory=VectorizerConfig)
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx = {d: i for i, d in enumerate(self.descriptors)}
        if len(idx) != len(self.descriptors):
            raise ValueError("duplicate feature descriptors")
        object.__setattr__(self, "index", idx)

    def __len__(self):
        return len(self.descriptors)

    def column(self, kind, name) -> int | None:
        return self.index.get(FeatureDescriptor(FeatureKind.parse(kind), name))

    def kinds(self) -> frozenset[FeatureKind]:
        return frozenset(d.kind for d in self.descriptors)

    def subset(self, columns: Sequence[int]) -> FeatureSpace:
        return FeatureSpace(tuple(self.descriptors[c] for c in columns), self.build_config)


MANIFEST_HEADER = "#rarescreen-feature-manifest\tv1"


def dumps_manifest(space: FeatureSpace) -> str:
    """Header line, then one ``kind<TAB>name`` line per column in column order."""
    lines = [MANIFEST_HEADER]
    lines += [f"{d.kind}\t{d.name}" for d in space.descriptors]
    return "\n".join(lines) + "\n"


def loads_manifest(text: str, config: VectorizerConfig | None = None) -> FeatureSpace:
    lines = text.split("\n")
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ValueError("not a feature manifest (bad header)")
    if lines[-1] != "":
        raise ValueError("manifest is truncated")
    descriptors = []
    for lineno, line in enumerate(lines[1:-1], start=2):
        kind, sep, name = line.partition("\t")
        if not sep:
            raise ValueError(f"manifest line {lineno}: expected kind<TAB>name")
        descriptors.append(FeatureDescriptor(FeatureKind.parse(kind), name))
    return FeatureSpace(tuple(descriptors), config or VectorizerConfig())


@dataclass(frozen=True)
class DesignMatrix:
    """Dense 0/1 matrix (uint8) of patients x features, plus 0/1 labels."""

    X: np.ndarray
    labels: np.ndarray
    feature_space: FeatureSpace
    patient_ids: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.uint8)
        y = np.asarray(self.labels, dtype=np.int8)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.shape[0] != y.shape[0]:
            raise ValueError("rows and labels differ in length")
        if X.shape[1] != len(self.feature_space):
            raise DimensionMismatch(f"matrix has {X.shape[1]} columns, feature space {len(self.feature_space)}")
        if X.size and X.max() > 1:
            raise ValueError("design matrix must be binary")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", y)

    @property
    def shape(self):
        return self.X.shape

    @property
    def rows(self) -> list[SparseVector]:
        return [SparseVector.from_dense(r) for r in self.X]

    def take_rows(self, idx) -> DesignMatrix:
        ids = tuple(self.patient_ids[i] for i in idx) if self.patient_ids else ()
        return DesignMatrix(self.X[idx], self.labels[idx], self.feature_space, ids)

    def take_columns(self, columns) -> DesignMatrix:
        columns = list(columns)
        return DesignMatrix(self.X[:, columns], self.labels, self.feature_space.subset(columns), self.patient_ids)


# ----------------------------------------------------------------------------


def discretize_age(age: int, bin_width: int = 10) -> str:
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    if not 0 <= age <= MAX_AGE:
        raise OutOfRange(f"age {age} outside 0..{MAX_AGE}")
    lo = bin_width * (age // bin_width)
    return f"{lo}-{lo + bin_width - 1}"


def preprocess_note(text: str, config: VectorizerConfig | None = None) -> list[str]:
    """Lowercase, strip punctuation, map numbers to a placeholder, drop stopwords.

    Numbers are recognised per whitespace chunk after trimming surrounding
    punctuation, so "140." and "0.9%" both become the placeholder while
    "b12" stays a word.
    """
    config = config or VectorizerConfig()
    tokens = []
    for chunk in text.lower().split():
        core = chunk.strip(string.punctuation)
        if _NUMERIC.fullmatch(core) or _NUMERIC.fullmatch(chunk):
            tokens.append(config.numeric_placeholder)
            continue
        word = _PUNCT.sub("", chunk)
        if word and word not in config.stopwords:
            tokens.append(word)
    return tokens


def extract_ngrams(tokens: Sequence[str], n: int) -> Counter:
    if n not in (1, 2):
        raise UnsupportedN(f"n must be 1 or 2, got {n}")
    return Counter(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _record_ngrams(record: PatientRecord, config: VectorizerConfig) -> dict[FeatureKind, set[str]]:
    """Distinct n-grams of a record; bigrams never span two notes."""
    uni, bi = set(), set()
    for note in record.notes:
        toks = preprocess_note(note, config)
        uni.update(extract_ngrams(toks, 1))
        bi.update(extract_ngrams(toks, 2))
    return {FeatureKind.UNIGRAM: uni, FeatureKind.BIGRAM: bi}


def record_features(
    record: PatientRecord, config: VectorizerConfig, kinds: Iterable[FeatureKind] = ALL_KINDS
) -> set[FeatureDescriptor]:
    """Every descriptor the record exhibits, before any vocabulary pruning."""
    kinds = frozenset(kinds)
    out = set()
    if FeatureKind.DEMOGRAPHIC in kinds:
        out.add(FeatureDescriptor(FeatureKind.DEMOGRAPHIC, "gender=" + canonical_entry(record.gender)))
        out.add(FeatureDescriptor(FeatureKind.DEMOGRAPHIC, "race=" + canonical_entry(record.race)))
        out.add(FeatureDescriptor(FeatureKind.DEMOGRAPHIC, "ethnicity=" + canonical_entry(record.ethnicity)))
        out.add(FeatureDescriptor(FeatureKind.DEMOGRAPHIC, "age=" + discretize_age(record.age, config.age_bin_width)))
    for kind in STRUCTURED_KINDS:
        if kind in kinds:
            for entry in record.entries(str(kind)):
                out.add(FeatureDescriptor(kind, canonical_entry(entry)))
    if kinds & set(NOTE_KINDS):
        for kind, grams in _record_ngrams(record, config).items():
            if kind in kinds:
                out.update(FeatureDescriptor(kind, g) for g in grams)
    return out


def build_feature_space(
    cohort: Cohort, config: VectorizerConfig | None = None, kinds: Iterable[FeatureKind] = ALL_KINDS
) -> FeatureSpace:
    """Collect the cohort's features, pruning n-grams by document frequency.

    An n-gram is kept when it occurs in at least ``min_doc_count`` records and
    in no more than ``max_doc_frequency`` of them.
    """
    config = config or VectorizerConfig()
    kinds = frozenset(FeatureKind.parse(k) for k in kinds)
    if len(cohort) == 0:
        raise EmptyCohort("cannot build a feature space from an empty cohort")
    doc_count = Counter()
    for rec in cohort:
        doc_count.update(record_features(rec, config, kinds))
    limit = config.max_doc_frequency * len(cohort)
    kept = [
        d
        for d, c in doc_count.items()
        if d.kind not in NOTE_KINDS or (c >= config.min_doc_count and c <= limit + 1e-9)
    ]
    return FeatureSpace(tuple(sorted(kept)), config)


def vectorize_record(record: PatientRecord, space: FeatureSpace) -> SparseVector:
    feats = record_features(record, space.build_config, space.kinds())
    active = sorted(space.index[d] for d in feats if d in space.index)
    return SparseVector(len(space), tuple(active))


def vectorize_cohort(cohort: Cohort, space: FeatureSpace) -> DesignMatrix:
    X = np.zeros((len(cohort), len(space)), dtype=np.uint8)
    for i, rec in enumerate(cohort):
        X[i, list(vectorize_record(rec, space).active)] = 1
    if all(r.label is not None for r in cohort):
        labels = cohort.labels
    else:
        labels = np.zeros(len(cohort), dtype=np.int8)
    return DesignMatrix(X, labels, space, tuple(r.patient_id for r in cohort))
