"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``code`` so the command line
front end can map it to an exit status and a JSON diagnostic.
"""


class SymplIndexError(Exception):
    code = "error"
    exit_status = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        for key, value in self.details.items():
            out[key] = value if isinstance(value, (int, float, str, bool, type(None))) else repr(value)
        return out


class InvalidArgument(SymplIndexError, ValueError):
    code = "invalid-argument"
    exit_status = 2


class ConfigError(InvalidArgument):
    code = "config-error"
    exit_status = 2


class ConstructionError(InvalidArgument):
    """A field violates symmetry or its declared bound on the sample grid."""

    code = "construction-error"
    exit_status = 2


class CatalogMiss(SymplIndexError, KeyError):
    code = "catalog-miss"
    exit_status = 2

    def __str__(self):
        return self.args[0]


class StructureMismatch(SymplIndexError, TypeError):
    code = "structure-mismatch"
    exit_status = 2


class DomainError(SymplIndexError, ValueError):
    code = "domain-error"
    exit_status = 2


class PreconditionError(SymplIndexError, ValueError):
    code = "precondition"
    exit_status = 2


class RangeError(SymplIndexError, ValueError):
    code = "range-error"
    exit_status = 2


class InsufficientHorizon(SymplIndexError, ValueError):
    code = "insufficient-horizon"
    exit_status = 2


class PropagationFailure(SymplIndexError, RuntimeError):
    code = "propagation-failure"
    exit_status = 3


class NumericalIntegrityError(SymplIndexError, RuntimeError):
    code = "numerical-integrity"
    exit_status = 3


class LiftFailure(NumericalIntegrityError):
    code = "lift-failure"


class PrecisionError(SymplIndexError, RuntimeError):
    code = "precision"
    exit_status = 4


class IndexUnstable(SymplIndexError, RuntimeError):
    code = "index-unstable"
    exit_status = 4


class InternalConsistencyError(SymplIndexError, AssertionError):
    code = "internal-consistency"
    exit_status = 5


class EquivalenceViolation(InternalConsistencyError):
    code = "equivalence-violation"
