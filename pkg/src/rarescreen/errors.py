"""Exception and warning types raised across the package."""


class ScreeningError(Exception):
    """Base class for all data and model errors."""


class MalformedRecord(ScreeningError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicatePatientId(ScreeningError):
    def __init__(self, patient_id):
        self.patient_id = patient_id
        super().__init__(f"duplicate patient_id {patient_id!r}")


class IoFailure(ScreeningError):
    pass


class InvalidSpec(ScreeningError):
    pass


class OutOfRange(ScreeningError):
    pass


class UnsupportedN(ScreeningError):
    pass


class EmptyCohort(ScreeningError):
    pass


class EmptyMatrix(ScreeningError):
    pass


class EmptyCounts(ScreeningError):
    pass


class SingleClass(ScreeningError):
    pass


class KTooLarge(ScreeningError):
    pass


class DimensionMismatch(ScreeningError):
    pass


class NoUsefulStump(ScreeningError):
    pass


class TooFewPerClass(ScreeningError):
    def __init__(self, label, count, k):
        self.label = label
        self.count = count
        super().__init__(f"class {label} has {count} members, need at least {k}")


class FoldError(ScreeningError):
    """A model fit failed inside one cross-validation fold."""

    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold}: {cause}")


class StageError(ScreeningError):
    """Wraps an error with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


class VersionMismatch(ScreeningError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"artifact format version {found}, expected {expected}")


class CorruptArtifact(ScreeningError):
    pass


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap; the result is flagged."""


class UnreachableRecall(UserWarning):
    """Prescreen rules ran out of atoms below the recall target; the result is flagged."""

    def __init__(self, best):
        self.best = best
        super().__init__(f"target recall not reached; best achieved {best:.6f}")
