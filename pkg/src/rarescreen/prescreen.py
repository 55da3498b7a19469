"""High-recall disjunctive prescreen rules built from ranked features."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .cohort import Cohort, PatientRecord
from .errors import SingleClass
from .vectorizer import FeatureDescriptor, FeatureKind, VectorizerConfig, record_features


@dataclass(frozen=True, order=True)
class Atom:
    """Either "descriptor present" or "age >= min_age" (descriptor is None then)."""

    descriptor: FeatureDescriptor | None = None
    min_age: int | None = None

    def __post_init__(self):
        if (self.descriptor is None) == (self.min_age is None):
            raise ValueError("an atom is either a descriptor or an age threshold")

    def __str__(self):
        if self.descriptor is None:
            return f"age >= {self.min_age}"
        return f"{self.descriptor} present"

    def matches(self, record: PatientRecord, features: set[FeatureDescriptor]) -> bool:
        if self.descriptor is None:
            return record.age >= self.min_age
        return self.descriptor in features


def atom_for(descriptor: FeatureDescriptor) -> Atom:
    # an age bin ranked as predictive becomes an open-ended threshold at its lower edge
    if descriptor.kind is FeatureKind.DEMOGRAPHIC and descriptor.name.startswith("age="):
        return Atom(min_age=int(descriptor.name[4:].split("-")[0]))
    return Atom(descriptor=descriptor)


@dataclass(frozen=True)
class PrescreenRuleSet:
    atoms: tuple[Atom, ...]
    measured_recall: float
    filter_fraction: float
    reached_target: bool = True
    vectorizer: VectorizerConfig = VectorizerConfig()

    def matches(self, record: PatientRecord) -> bool:
        """Empty disjunction matches everyone."""
        if not self.atoms:
            return True
        feats = record_features(record, self.vectorizer)
        return any(a.matches(record, feats) for a in self.atoms)

    def apply(self, cohort: Cohort) -> list[PatientRecord]:
        return [r for r in cohort if self.matches(r)]

    def to_text(self) -> str:
        lines = [f"measured_recall\t{self.measured_recall!r}", f"filter_fraction\t{self.filter_fraction!r}",
                 f"reached_target\t{str(self.reached_target).lower()}"]
        lines += [f"rule\t{i + 1}\t{a}" for i, a in enumerate(self.atoms)]
        return "\n".join(lines) + "\n"


def derive_prescreen_rules(
    cohort: Cohort, top, target_recall: float = 1.0, vectorizer_config: VectorizerConfig | None = None
) -> PrescreenRuleSet:
    """Greedy disjunction over ``top`` (descriptors or (descriptor, weight) pairs).

    Atoms are tried in rank order.  Negatively weighted features and atoms
    that retain no additional positive are skipped, since they only widen
    the filter.  Stops once recall reaches ``target_recall``; if the list runs
    out first the best rule set is returned with ``reached_target`` false and
    an UnreachableRecall warning.
    """
    from .errors import UnreachableRecall

    if not 0 < target_recall <= 1:
        raise ValueError("target_recall must be in (0, 1]")
    config = vectorizer_config or VectorizerConfig()
    records = list(cohort)
    if any(r.label is None for r in records):
        raise ValueError("prescreen rules need a fully labeled cohort")
    positives = [i for i, r in enumerate(records) if r.label == 1]
    if not positives:
        raise SingleClass("prescreen rules need at least one positive")
    feats = [record_features(r, config) for r in records]

    def rule_set(atoms, covered_pos, reached):
        if not atoms:
            return PrescreenRuleSet((), 1.0, 0.0, True, config)
        kept = sum(any(a.matches(r, f) for a in atoms) for r, f in zip(records, feats))
        return PrescreenRuleSet(tuple(atoms), covered_pos / len(positives), 1.0 - kept / len(records), reached, config)

    entries = [(e, 1.0) if isinstance(e, FeatureDescriptor) else (e[0], e[1]) for e in top]
    if not entries:
        return rule_set([], len(positives), True)

    atoms: list[Atom] = []
    covered: set[int] = set()
    for desc, weight in entries:
        if len(covered) >= target_recall * len(positives) - 1e-12:
            break
        if weight <= 0:
            continue
        atom = atom_for(desc)
        if atom in atoms:
            continue
        new = {i for i in positives if i not in covered and atom.matches(records[i], feats[i])}
        if new:
            atoms.append(atom)
            covered |= new
    if not atoms:
        return rule_set([], len(positives), True)
    reached = len(covered) >= target_recall * len(positives) - 1e-12
    result = rule_set(atoms, len(covered), reached)
    if not reached:
        warnings.warn(UnreachableRecall(result.measured_recall), stacklevel=2)
    return result
