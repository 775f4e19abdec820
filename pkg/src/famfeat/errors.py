"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: parameter/format problems
are user errors (exit 2), everything else is an internal failure (exit 1).
"""


class FamfeatError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FamfeatError, ValueError):
    """An argument violates an operation's precondition."""


class DataFormatError(ParameterError):
    """A dataset or artifact file is malformed.

    Carries enough context (path, optionally line number) to point a user at
    the offending spot.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{loc}{message}")


class RankError(FamfeatError):
    """Input is numerically rank-deficient (e.g. duplicated channels)."""


class ConvergenceError(FamfeatError):
    """An iterative solver did not converge within its iteration budget."""

    def __init__(self, message, iterations=None, violations=None):
        self.iterations = iterations
        self.violations = violations
        super().__init__(message)


class UndefinedFeatureError(FamfeatError):
    """A feature value is mathematically undefined for this input.

    ``feature`` names the offending quantity so callers can record an
    explicit missing marker instead of a bogus number.
    """

    def __init__(self, message, feature=None):
        self.feature = feature
        super().__init__(message)
