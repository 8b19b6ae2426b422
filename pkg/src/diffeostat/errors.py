"""Exception hierarchy shared by every module of the package."""


class DiffeostatError(Exception):
    """Base class for all package errors."""


class ValidationError(DiffeostatError, ValueError):
    """A value violates the invariants of its type."""


class SpaceMismatchError(DiffeostatError, ValueError):
    """Operands live on different sample spaces."""


class DominationError(DiffeostatError, ValueError):
    """A signed measure is not dominated by the base measure.

    Raised when some atom carries (numerically) zero base mass but nonzero
    direction mass, so the logarithmic representation is undefined.
    """


class DomainError(DiffeostatError, ValueError):
    """A parameter lies outside the open domain of a plot."""


class ModelError(DiffeostatError, ValueError):
    """A plot produced a value that is not a probability measure."""


class BaseMismatchError(DiffeostatError, ValueError):
    """Tangent vectors are attached to different base points."""


class CurveBaseError(DiffeostatError, ValueError):
    """A probe curve does not pass through the requested base point."""


class EmptySampleError(DiffeostatError, ValueError):
    """A sufficiency check received no sample measures."""


class TableMissError(DiffeostatError, KeyError):
    """A table-valued map was evaluated at an unregistered point."""


class DegenerateBasisError(DiffeostatError, ValueError):
    """The Fisher Gram matrix of a tangent basis is (numerically) singular."""


class ConsistencyError(DiffeostatError, ArithmeticError):
    """A guaranteed inequality failed beyond its numerical tolerance."""


class ParseError(DiffeostatError):
    """A configuration document is not well-formed JSON."""


class SchemaError(DiffeostatError):
    """A configuration document does not match the published schema."""


class ExperimentError(DiffeostatError):
    """An experiment failed; wraps the underlying error with context."""

    def __init__(self, experiment, cause):
        self.experiment = experiment
        self.cause = cause
        super().__init__(f"experiment {experiment!r}: {type(cause).__name__}: {cause}")


class IoError(DiffeostatError, OSError):
    """A report could not be written."""
