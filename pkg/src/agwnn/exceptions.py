"""Exception hierarchy.

Every error raised on purpose by the package derives from ``AgwnnError``;
the CLI maps the three families below onto exit codes.
"""


class AgwnnError(Exception):
    """Base class for all package errors."""


class InputError(AgwnnError, ValueError):
    """Malformed or out-of-contract input (CLI exit code 3)."""


class FitError(AgwnnError, ArithmeticError):
    """A numeric procedure could not produce a valid result (exit code 4)."""


class UsageError(AgwnnError, ValueError):
    """Invalid configuration or call sequence (exit code 2)."""


class InvalidKernelError(UsageError):
    pass


class ShapeError(InputError):
    pass


class DataError(InputError):
    """Problem in a data file; ``row`` is the 1-based data row when known."""

    def __init__(self, message, row=None, path=None):
        self.row = row
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if row is not None:
            prefix += f"row {row}: "
        super().__init__(prefix + message)


class RankDeficiencyError(FitError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"design matrix is rank deficient at column {column}")


class LocalSingularityError(FitError):
    def __init__(self, index, bandwidth, condition):
        self.index = index
        self.bandwidth = bandwidth
        self.condition = condition
        super().__init__(
            f"local system at location {index} is singular "
            f"(condition {condition:.3g}) for bandwidth {bandwidth:.6g}"
        )


class OversmoothingError(FitError):
    """AICc denominator n - 2 - tr(S) is not positive."""


class NoFeasibleBandwidthError(FitError):
    pass


class NumericOverflowError(FitError):
    def __init__(self, where, message=None):
        self.where = where
        super().__init__(message or f"non-finite values produced at {where}")


class DivergenceError(FitError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


class ModeError(UsageError):
    pass


class ConfigError(UsageError):
    pass
