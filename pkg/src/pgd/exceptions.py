"""Exception hierarchy shared across the package."""

import numpy as np


class PGDError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(PGDError, ValueError):
    """Invalid input: wrong shape, non-SPD operator, bad configuration."""


class DimensionMismatchError(ValidationError):
    pass


class MatrixFileError(ValidationError):
    """Malformed matrix file. ``line`` is the 1-based offending line."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class PreconditionError(ValidationError):
    pass


class DegenerateIterateError(PGDError, ArithmeticError):
    """Every frozen factor vanished, so the alternating linear system is singular."""


class BreakdownError(PGDError, ArithmeticError):
    """Power iteration hit ``G @ S == 0``."""


class SingularSystemError(PGDError, np.linalg.LinAlgError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class StalledError(PGDError, RuntimeError):
    """A greedy decomposition stopped making progress. ``partial`` holds what was built."""

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class ConclusionViolated(PGDError, AssertionError):
    """A sequence met the hypotheses of the a_n <= A/n recurrence bound but not its conclusion."""


class SlowConvergenceWarning(UserWarning):
    pass
