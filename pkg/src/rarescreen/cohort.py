"""Patient records, cohort files and the synthetic cohort generator.

A cohort file is UTF-8 JSON Lines: one object per patient with the keys
``patient_id, gender, race, ethnicity, age, diagnoses, medications,
problems, surgical, notes`` and an optional ``label`` ("positive" or
"negative").  Unknown keys are rejected.
"""

from __future__ import annotations

import enum
import json
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DuplicatePatientId, InvalidSpec, IoFailure, MalformedRecord

MAX_AGE = 130

SET_FIELDS = ("diagnoses", "medications", "problems", "surgical")
FIELD_ORDER = (
    "patient_id",
    "gender",
    "race",
    "ethnicity",
    "age",
    "diagnoses",
    "medications",
    "problems",
    "surgical",
    "notes",
    "label",
)

# feature kind name -> record attribute holding that kind's entries
FIELD_BY_KIND = {
    "diagnosis": "diagnoses",
    "medication": "medications",
    "problem": "problems",
    "surgical": "surgical",
}


class Label(enum.IntEnum):
    NEGATIVE = 0
    POSITIVE = 1

    @classmethod
    def parse(cls, text):
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown label {text!r}") from None

    def __str__(self):
        return self.name.lower()


_WS = re.compile(r"\s+")


def canonical_entry(text: str) -> str:
    """Trim, lowercase and collapse internal whitespace."""
    return _WS.sub(" ", text.strip().lower())


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    gender: str
    race: str
    ethnicity: str
    age: int
    diagnoses: tuple[str, ...] = ()
    medications: tuple[str, ...] = ()
    problems: tuple[str, ...] = ()
    surgical: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    label: Label | None = None

    def entries(self, kind: str) -> tuple[str, ...]:
        return getattr(self, FIELD_BY_KIND[kind])

    def to_dict(self) -> dict:
        out = {
            "patient_id": self.patient_id,
            "gender": self.gender,
            "race": self.race,
            "ethnicity": self.ethnicity,
            "age": self.age,
        }
        for name in SET_FIELDS:
            out[name] = list(getattr(self, name))
        out["notes"] = list(self.notes)
        if self.label is not None:
            out["label"] = str(self.label)
        return out


@dataclass(frozen=True)
class Cohort:
    records: tuple[PatientRecord, ...]
    provenance: str = "loaded"

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self) -> np.ndarray:
        """Labels as an int8 array (1 positive, 0 negative); unlabeled rows raise."""
        if any(r.label is None for r in self.records):
            raise ValueError("cohort contains unlabeled records")
        return np.array([int(r.label) for r in self.records], dtype=np.int8)


@dataclass(frozen=True)
class Violation:
    patient_id: str
    invariant: str

    def __str__(self):
        return f"{self.patient_id}: {self.invariant}"


# ----------------------------------------------------------------------------
# Parsing and serialization


def _parse_record(obj, line: int) -> PatientRecord:
    if not isinstance(obj, dict):
        raise MalformedRecord(line, "record is not a JSON object")
    unknown = sorted(set(obj) - set(FIELD_ORDER))
    if unknown:
        raise MalformedRecord(line, f"unknown field(s) {', '.join(unknown)}")
    missing = [k for k in FIELD_ORDER[:-1] if k not in obj]
    if missing:
        raise MalformedRecord(line, f"missing field(s) {', '.join(missing)}")

    for key in ("patient_id", "gender", "race", "ethnicity"):
        if not isinstance(obj[key], str):
            raise MalformedRecord(line, f"{key} must be a string")
    if not obj["patient_id"].strip():
        raise MalformedRecord(line, "patient_id is empty")

    age = obj["age"]
    if isinstance(age, bool) or not isinstance(age, int):
        raise MalformedRecord(line, "age must be an integer")
    if not 0 <= age <= MAX_AGE:
        raise MalformedRecord(line, f"age {age} outside bound 0..{MAX_AGE}")

    sets = {}
    for key in SET_FIELDS:
        values = obj[key]
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise MalformedRecord(line, f"{key} must be a list of strings")
        canon = [canonical_entry(v) for v in values]
        if any(not c for c in canon):
            raise MalformedRecord(line, f"{key} contains an empty entry")
        if len(set(canon)) != len(canon):
            raise MalformedRecord(line, f"{key} contains duplicate entries")
        sets[key] = tuple(sorted(canon))

    notes = obj["notes"]
    if not isinstance(notes, list) or not all(isinstance(v, str) for v in notes):
        raise MalformedRecord(line, "notes must be a list of strings")

    label = None
    if obj.get("label") is not None:
        if obj["label"] not in ("positive", "negative"):
            raise MalformedRecord(line, f"label must be 'positive' or 'negative', got {obj['label']!r}")
        label = Label.parse(obj["label"])

    return PatientRecord(
        patient_id=obj["patient_id"],
        gender=obj["gender"],
        race=obj["race"],
        ethnicity=obj["ethnicity"],
        age=age,
        notes=tuple(notes),
        label=label,
        **sets,
    )


def parse_cohort(lines: Iterable[str], provenance: str = "loaded") -> Cohort:
    records = []
    seen = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON: {exc.msg}") from None
        record = _parse_record(obj, lineno)
        if record.patient_id in seen:
            raise DuplicatePatientId(record.patient_id)
        seen.add(record.patient_id)
        records.append(record)
    return Cohort(tuple(records), provenance)


def load_cohort(path) -> Cohort:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_cohort(fh)
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def dumps_record(record: PatientRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, separators=(",", ":"))


def dumps_cohort(cohort: Cohort) -> str:
    return "".join(dumps_record(r) + "\n" for r in cohort.records)


def save_cohort(cohort: Cohort, path) -> None:
    try:
        Path(path).write_text(dumps_cohort(cohort), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def validate_cohort(cohort: Cohort) -> list[Violation]:
    """Return every invariant violation; an empty list means the cohort is valid."""
    out = []
    seen = set()
    for rec in cohort.records:
        pid = rec.patient_id
        if not isinstance(pid, str) or not pid.strip():
            out.append(Violation(str(pid), "patient_id must be a non-empty string"))
        elif pid in seen:
            out.append(Violation(pid, "patient_id is not unique"))
        seen.add(pid)
        if isinstance(rec.age, bool) or not isinstance(rec.age, int) or not 0 <= rec.age <= MAX_AGE:
            out.append(Violation(pid, f"age {rec.age!r} outside 0..{MAX_AGE}"))
        for name in SET_FIELDS:
            canon = [canonical_entry(v) for v in getattr(rec, name)]
            if len(set(canon)) != len(canon):
                out.append(Violation(pid, f"{name} contains duplicate entries"))
        if rec.label is not None and not isinstance(rec.label, Label):
            out.append(Violation(pid, f"label {rec.label!r} is not a Label"))
    return out


# ----------------------------------------------------------------------------
# Synthetic cohorts


@dataclass(frozen=True)
class SignalFeature:
    kind: str
    name: str
    p_given_positive: float
    p_given_negative: float


DEFAULT_SIGNALS = tuple(
    SignalFeature(kind, name, 0.6, 0.05)
    for kind, name in [
        ("diagnosis", "cardiac arrest"),
        ("diagnosis", "chest pain"),
        ("diagnosis", "congestive heart failure"),
        ("diagnosis", "hypertension"),
        ("diagnosis", "prim open angle glaucoma"),
        ("diagnosis", "shoulder arthritis"),
        ("medication", "doxercalciferol"),
        ("medication", "loratadine 10mg"),
        ("medication", "levothyroxine sodium 25mcg"),
        ("medication", "sodium chloride 0.9%"),
    ]
)

DEFAULT_NOISE = {"diagnosis": 800, "medication": 600, "problem": 500, "surgical": 100}

DEFAULT_AGES = {
    "positive": {50: 0.05, 60: 0.2, 70: 0.4, 80: 0.35},
    "negative": {30: 0.05, 40: 0.1, 50: 0.2, 60: 0.3, 70: 0.25, 80: 0.1},
}

GENDERS = ("female", "male")
RACES = ("white", "black or african american", "asian", "other")
RACE_WEIGHTS = (0.6, 0.2, 0.1, 0.1)
ETHNICITIES = ("not hispanic or latino", "hispanic or latino", "unknown")
ETHNICITY_WEIGHTS = (0.8, 0.15, 0.05)

_NOTE_PHRASES = (
    "patient seen in clinic today",
    "reports fatigue and shortness of breath",
    "denies fever or chills",
    "follow up in {n} weeks",
    "blood pressure {n} over {m}",
    "heart rate {n} bpm",
    "echo ordered",
    "continue current medications",
    "weight {n} kg",
    "no acute distress",
    "lungs clear to auscultation",
    "mild edema in lower extremities",
)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a labeled synthetic cohort with planted class signal.

    ``age_distribution`` maps "positive"/"negative" to ``{decade_lower_bound: weight}``.
    """

    n_positive: int = 73
    n_negative: int = 197
    signal_features: tuple[SignalFeature, ...] = DEFAULT_SIGNALS
    n_noise_features_per_kind: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_NOISE))
    noise_presence_rate: float = 0.03
    age_distribution: Mapping[str, Mapping[int, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_AGES.items()}
    )
    notes_per_patient: int = 2
    seed: int = 20160

    @classmethod
    def from_dict(cls, data: Mapping) -> SynthSpec:
        data = dict(data)
        if "signal_features" in data:
            data["signal_features"] = tuple(
                s if isinstance(s, SignalFeature) else SignalFeature(**s) for s in data["signal_features"]
            )
        if "age_distribution" in data:
            data["age_distribution"] = {
                cls_: {int(k): float(v) for k, v in w.items()} for cls_, w in data["age_distribution"].items()
            }
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidSpec(f"unknown SynthSpec field(s): {sorted(unknown)}")
        return cls(**data)

    def check(self) -> None:
        if self.n_positive < 0 or self.n_negative < 0:
            raise InvalidSpec("class counts must be >= 0")
        if not 0 <= self.noise_presence_rate <= 1:
            raise InvalidSpec("noise_presence_rate must lie in [0, 1]")
        if self.notes_per_patient < 0:
            raise InvalidSpec("notes_per_patient must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        seen = set()
        for s in self.signal_features:
            if s.kind not in FIELD_BY_KIND:
                raise InvalidSpec(f"signal feature kind {s.kind!r} not one of {sorted(FIELD_BY_KIND)}")
            if not (0 <= s.p_given_positive <= 1 and 0 <= s.p_given_negative <= 1):
                raise InvalidSpec(f"probabilities of {s.name!r} must lie in [0, 1]")
            key = (s.kind, canonical_entry(s.name))
            if key in seen:
                raise InvalidSpec(f"duplicate signal feature {s.name!r}")
            seen.add(key)
        for kind, count in self.n_noise_features_per_kind.items():
            if kind not in FIELD_BY_KIND:
                raise InvalidSpec(f"noise feature kind {kind!r} not one of {sorted(FIELD_BY_KIND)}")
            if count < 0:
                raise InvalidSpec("noise feature counts must be >= 0")
        for cls_ in ("positive", "negative"):
            weights = self.age_distribution.get(cls_)
            if not weights:
                raise InvalidSpec(f"age_distribution missing class {cls_!r}")
            if any(w < 0 for w in weights.values()):
                raise InvalidSpec("age weights must be non-negative")
            if not math.isclose(sum(weights.values()), 1.0, abs_tol=1e-9):
                raise InvalidSpec(f"age weights for {cls_!r} must sum to 1")
            if any(not 0 <= lo <= MAX_AGE for lo in weights):
                raise InvalidSpec(f"age bin lower bounds must lie in 0..{MAX_AGE}")


def _noise_names(spec: SynthSpec) -> list[tuple[str, str]]:
    names = []
    for kind in FIELD_BY_KIND:
        for i in range(spec.n_noise_features_per_kind.get(kind, 0)):
            names.append((kind, f"noise {kind} {i:04d}"))
    return names


def _make_note(rng: np.random.Generator, present: Sequence[str]) -> str:
    picks = rng.choice(len(_NOTE_PHRASES), size=3, replace=False)
    parts = []
    for i in picks:
        n, m = rng.integers(1, 200, size=2)
        parts.append(_NOTE_PHRASES[i].format(n=int(n), m=int(m)))
    for name in present:
        if rng.random() < 0.5:
            parts.append(f"history of {name}")
    return ". ".join(p.capitalize() for p in parts) + "."


def generate_synthetic_cohort(spec: SynthSpec | None = None) -> Cohort:
    """Generate a labeled cohort; a pure function of ``spec``.

    Labels are fixed first (exact class counts, shuffled order), then every
    signal feature is drawn independently per patient with its
    class-conditional probability and every noise feature with
    ``noise_presence_rate``.
    """
    spec = spec or SynthSpec()
    spec.check()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_positive + spec.n_negative

    labels = np.array([1] * spec.n_positive + [0] * spec.n_negative, dtype=np.int8)
    labels = labels[rng.permutation(n)]

    genders = rng.choice(len(GENDERS), size=n)
    races = rng.choice(len(RACES), size=n, p=RACE_WEIGHTS)
    ethnicities = rng.choice(len(ETHNICITIES), size=n, p=ETHNICITY_WEIGHTS)

    ages = np.empty(n, dtype=np.int64)
    for cls_, flag in (("positive", 1), ("negative", 0)):
        rows = np.flatnonzero(labels == flag)
        bins = sorted(spec.age_distribution[cls_].items())
        lows = np.array([lo for lo, _ in bins])
        probs = np.array([w for _, w in bins], dtype=float)
        probs /= probs.sum()
        lo = lows[rng.choice(len(lows), size=len(rows), p=probs)]
        ages[rows] = np.minimum(lo + rng.integers(0, 10, size=len(rows)), MAX_AGE)

    signals = spec.signal_features
    p_sig = np.array([[s.p_given_negative, s.p_given_positive] for s in signals]).reshape(-1, 2)
    sig_draw = rng.random((n, len(signals))) < p_sig[:, labels].T

    noise = _noise_names(spec)
    noise_draw = rng.random((n, len(noise))) < spec.noise_presence_rate

    width = len(str(max(n, 1)))
    records = []
    for i in range(n):
        entries = {kind: [] for kind in FIELD_BY_KIND}
        for j in np.flatnonzero(sig_draw[i]):
            entries[signals[j].kind].append(canonical_entry(signals[j].name))
        for j in np.flatnonzero(noise_draw[i]):
            kind, name = noise[j]
            entries[kind].append(name)
        present = [canonical_entry(signals[j].name) for j in np.flatnonzero(sig_draw[i])]
        notes = tuple(_make_note(rng, present) for _ in range(spec.notes_per_patient))
        records.append(
            PatientRecord(
                patient_id=f"syn-{i + 1:0{width}d}",
                gender=GENDERS[genders[i]],
                race=RACES[races[i]],
                ethnicity=ETHNICITIES[ethnicities[i]],
                age=int(ages[i]),
                notes=notes,
                label=Label(int(labels[i])),
                **{FIELD_BY_KIND[k]: tuple(sorted(v)) for k, v in entries.items()},
            )
        )
    return Cohort(tuple(records), "synthetic")
