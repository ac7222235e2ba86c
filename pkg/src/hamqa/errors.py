"""Exception hierarchy shared across the package.

The CLI maps each family to a distinct exit code, so new errors should
subclass one of the four roots below.
"""


class HamqaError(Exception):
    """Base class for all package errors."""


class ConfigError(HamqaError, ValueError):
    """Invalid configuration or argument combination."""


class DataError(HamqaError, ValueError):
    """Malformed or inconsistent input data."""


class CorpusParseError(DataError):
    """The corpus file is not valid JSON or violates the expected schema."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DataIntegrityError(DataError):
    """A record is well-formed but internally inconsistent."""


class NumericError(HamqaError, ArithmeticError):
    """Non-finite values appeared where finite ones were required."""


class ShapeError(HamqaError, ValueError):
    """Operand shapes are incompatible."""


class ContractViolation(HamqaError, RuntimeError):
    """A documented precondition was not met by the caller."""


class CheckpointError(HamqaError, IOError):
    """A checkpoint or cache directory could not be loaded."""
