from typing import Optional, Tuple

EXIT_PASS = 0
EXIT_STATISTICAL_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class HazardLabError(Exception):
    """Base class for all errors raised by hazardlab."""

    exit_code = EXIT_NUMERICAL


class DomainError(HazardLabError, ValueError):
    """Numeric argument outside the domain of a kernel."""

    exit_code = EXIT_USAGE


class ContractViolation(HazardLabError, ValueError):
    """Caller broke an operation's precondition."""

    exit_code = EXIT_USAGE


class ValidationError(HazardLabError, ValueError):
    """Model, schedule or config invariant violated."""

    exit_code = EXIT_USAGE


class NumericalError(HazardLabError, ArithmeticError):
    """Quadrature or other numerical procedure failed to reach its tolerance."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, achieved_tolerance: Optional[float] = None):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class SingularKernelError(NumericalError):
    """Survival kernel fell below the floor on part of a window."""

    def __init__(self, message: str, interval: Tuple[float, float]):
        super().__init__(message)
        self.interval = interval
