"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` and numerical
problems from :class:`NumericalError`; the CLI maps the two families to
distinct exit codes.
"""


class FGaussError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(FGaussError):
    """Invalid user input (config text, CLI arguments, parameters)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class UnknownKey(ConfigError):
    pass


class DomainError(ConfigError, ValueError):
    pass


class ConventionMismatch(FGaussError, ValueError):
    """A grid function has the wrong sampling convention or length."""


class NumericalError(FGaussError):
    """A computation could not be carried out reliably."""


class NonFinite(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class NonIntegrable(NumericalError):
    pass


class SingularOperator(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


class VarianceBlowup(NumericalError):
    pass


class DegenerateInput(NumericalError):
    pass


class DegenerateT0(NumericalError):
    pass


class NonIntegrableReciprocal(NumericalError):
    pass


class NotReducible(NumericalError):
    pass


class UnsupportedKernel(NumericalError):
    pass
