"""Exception hierarchy shared by every stage of the pipeline."""


class AuditError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(AuditError):
    pass


class MissingColumn(AuditError):
    def __init__(self, name):
        super().__init__(f"missing column: {name!r}")
        self.name = name


class TypeMismatch(AuditError):
    def __init__(self, row, column, value=None):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptyFile(AuditError):
    pass


class NegativeStay(AuditError):
    def __init__(self, admission_id):
        super().__init__(f"admission {admission_id!r} is discharged before it is admitted")
        self.admission_id = admission_id


class TooFewRows(AuditError):
    pass


class NoStatsForColumn(AuditError):
    def __init__(self, name):
        super().__init__(f"no fitted preprocessing statistics for column {name!r}")
        self.name = name


class ConfigInvalid(AuditError):
    def __init__(self, reason):
        super().__init__(f"invalid configuration: {reason}")
        self.reason = reason


class UnknownAttribute(AuditError):
    pass


class InvalidHyperparameter(AuditError):
    pass


class SingleClassTraining(AuditError):
    pass


class DimensionMismatch(AuditError):
    pass


class EmptyGrid(AuditError):
    pass


class SingleClassFold(AuditError):
    pass


class LengthMismatch(AuditError):
    pass


class EmptyInput(AuditError):
    pass


class UnknownReference(AuditError):
    pass


class MissingReference(AuditError):
    pass


class UnknownFormat(AuditError):
    pass


class PipelineError(AuditError):
    """A sub-stage failure, annotated with the stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class NonConvergenceWarning(UserWarning):
    """Iterative fit stopped at max_iter; the model is still returned, flagged."""
