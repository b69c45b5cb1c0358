"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration/usage problems exit with 2,
numerical aborts with 3.
"""

from __future__ import annotations


class DegsdeError(Exception):
    """Base class for all package errors."""

    exit_code = 3


# -- configuration / usage ---------------------------------------------------


class ConfigError(DegsdeError):
    exit_code = 2


class UnknownModel(ConfigError):
    pass


class DimensionMismatch(ConfigError):
    pass


# -- expression language -----------------------------------------------------


class ParseError(ConfigError):
    """Syntax error in a coefficient expression; ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int = 0, source: str = ""):
        self.offset = offset
        self.source = source
        self.message = message
        super().__init__(f"{message} at offset {offset}" + (f" in {source!r}" if source else ""))


class UnknownVariable(ParseError):
    pass


class UnknownFunction(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(DegsdeError):
    """Real-valued evaluation left its domain (log/div/sqrt/pow/overflow)."""

    def __init__(self, message: str, subexpr: str = ""):
        self.subexpr = subexpr
        super().__init__(f"{message}: {subexpr}" if subexpr else message)


# -- modulus ladder ----------------------------------------------------------


class DivergenceProbeFailed(DegsdeError):
    pass


class QuadratureFailure(DegsdeError):
    pass


class CalibrationFailure(DegsdeError):
    pass


# -- condition checks --------------------------------------------------------


class DegenerateSlice(DegsdeError):
    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class MissingSigmaTilde(ConfigError):
    pass


# -- simulation / coupling ---------------------------------------------------


class NonFiniteState(DegsdeError):
    """Raised when a scheme produces NaN/inf; carries the partial trajectory."""

    def __init__(self, message: str, step: int = -1, partial=None):
        self.step = step
        self.partial = partial
        super().__init__(message)


class NonMonotone(DegsdeError):
    pass


class ZeroDiffusion(DegsdeError):
    pass


class ComparisonPrecondition(DegsdeError):
    """The envelope does not satisfy the drift ordering needed for coupling."""
