"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems -> 2,
numeric budget / capacity problems -> 3, frame degeneracy -> 4.
"""


class SrlabError(Exception):
    """Base class for all package errors."""


class ConfigError(SrlabError):
    """Invalid configuration, unparsable expression, or bad arguments."""


class ExpressionError(ConfigError):
    """Expression parse/evaluation failure; carries line/column info."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column})"
        super().__init__(message + loc)


class GridMismatchError(SrlabError):
    """Operands live on different grids."""


class DegeneracyError(SrlabError):
    """Frame fails the contact condition (or a pointwise solve is singular).

    ``locations`` holds grid indices (i, j, k) where the failure was detected.
    """

    def __init__(self, message, locations=None):
        self.locations = locations or []
        if self.locations:
            message += f"; first failing grid point {tuple(self.locations[0])}"
        super().__init__(message)


class BudgetError(SrlabError):
    """A numeric budget was exceeded (table capacity, sector budget, ...)."""


class CapacityError(BudgetError):
    """Spectrum enumeration would exceed the configured entry budget."""


class IncompleteSpectrumError(SrlabError):
    """A count was requested beyond the completeness bound of a table."""


class WindowError(SrlabError):
    """1D solve window too small for the requested accuracy."""

    def __init__(self, message, suggested_width=None):
        self.suggested_width = suggested_width
        if suggested_width is not None:
            message += f"; suggested half-width {suggested_width:.3f}"
        super().__init__(message)


class EscapeError(SrlabError):
    """Trajectory left a non-periodic chart."""

    def __init__(self, message, exit_time=None):
        self.exit_time = exit_time
        if exit_time is not None:
            message += f" (exit time {exit_time:.6g})"
        super().__init__(message)
