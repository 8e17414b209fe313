"""Exception hierarchy."""


class L1RtoError(Exception):
    """Base class for all failures raised by the package."""


class RankDeficientError(L1RtoError):
    def __init__(self, column, value, tol):
        self.column = column
        self.value = value
        self.tol = tol
        super().__init__(
            f"matrix is rank deficient at column {column}: |R[{column},{column}]| = {value:.3e} <= {tol:.3e}"
        )


class SingularMatrixError(L1RtoError):
    pass


class NonFiniteError(L1RtoError, ValueError):
    pass


class ConvergenceError(L1RtoError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class AssumptionViolation(L1RtoError):
    pass


class ConfigError(L1RtoError, ValueError):
    pass
