"""
Exception hierarchy for the chloride ingress toolkit.

Every error carries an ``exit_code`` so the command line can map failures
onto its usage / data / numerical classes without inspecting messages.
"""

from typing import Optional


class ClingressError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 2


class ArgumentError(ClingressError, ValueError):
    """Invalid argument: bad fraction, fold count, feature id or shape"""

    exit_code = 1


class SchemaError(ClingressError):
    """A required canonical column could not be resolved"""

    def __init__(self, field: str, column: str):
        self.field = field
        self.column = column
        super().__init__(f"Missing required column '{column}' (feature '{field}')")


class DataParseError(ClingressError):
    """A cell could not be parsed as a finite number"""

    def __init__(self, row: int, column: str, field: str, value: str):
        self.row = row
        self.column = column
        self.field = field
        self.value = value
        super().__init__(f"Cannot parse {value!r} at row {row}, column '{column}' ({field})")


class EmptyDatasetError(ClingressError):
    """The dataset has no rows"""


class InvalidFeatureError(ClingressError):
    """A feature value lies outside its physical range"""

    def __init__(self, field: str, value: float, reason: str, row: Optional[int] = None):
        self.field = field
        self.value = value
        self.row = row
        where = f" at row {row}" if row is not None else ""
        super().__init__(f"Invalid {field}={value!r}{where}: {reason}")


class DegenerateColumnError(ClingressError):
    """A column has zero variance and cannot be standardized"""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"Column '{column}' has zero variance")


class ModelFormatError(ClingressError):
    """A persisted model document is malformed or has an unknown version"""


class NumericalError(ClingressError):
    """Base class for numerical and convergence failures"""

    exit_code = 3


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization hit a non-positive pivot"""

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"Matrix is not positive definite (pivot {pivot})")


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap"""

    def __init__(self, message: str, worst_kkt: Optional[float] = None):
        self.worst_kkt = worst_kkt
        super().__init__(message)


class TrainingDivergedError(NumericalError):
    """Gradient training produced a non-finite or exploding loss"""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"Training diverged at epoch {epoch} (loss={loss!r})")


class UndefinedMetricError(NumericalError):
    """A metric is undefined for the given inputs"""
