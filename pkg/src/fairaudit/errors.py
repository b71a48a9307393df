"""Exception hierarchy shared across the toolkit."""


class FairAuditError(Exception):
    """Base class for every error raised by this package."""


class InputError(FairAuditError):
    """Bad user input: malformed files, recipes or schemas (CLI exit 2)."""


class FormatError(InputError):
    pass


class SchemaError(InputError):
    pass


class MappingError(InputError):
    pass


class RecipeError(InputError):
    pass


class BinError(InputError):
    pass


class DegenerateError(FairAuditError):
    pass


class EmptyGroupError(FairAuditError):
    pass


class UnknownStratumError(FairAuditError):
    pass


class AllStrataUndefinedError(FairAuditError):
    pass


class LengthMismatchError(FairAuditError):
    pass


class ZeroMarginError(FairAuditError):
    pass


class DimensionError(FairAuditError):
    pass


class NonConvergenceError(FairAuditError):
    pass


class InfeasibleError(FairAuditError):
    """No candidate model met the fairness constraint.

    ``best`` carries the closest model found, for best-effort callers.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DuplicateCellError(FairAuditError):
    pass


class ArtifactError(FairAuditError):
    """A required sweep or audit artifact is missing or malformed (CLI exit 4)."""
