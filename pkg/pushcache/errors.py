"""Exceptions raised by pushcache, with the CLI exit code each one maps to."""

from typing import Any, Optional


class PushcacheError(Exception):
    """Base class for all pushcache failures."""

    exit_code: int = 1


class ConfigError(PushcacheError, ValueError):
    """Malformed or inconsistent configuration document."""

    exit_code = 2


class PolicyMismatchError(PushcacheError, ValueError):
    """A policy file does not match the configuration it is applied to."""

    exit_code = 2


class InfeasibleMarginalError(PushcacheError, ValueError):
    """A marginal vector cannot be realized under the staircase zero pattern."""

    def __init__(self, message: str, b: int, violation: float = 0.0):
        super().__init__(message)
        self.b = b
        self.violation = violation


class InfeasibleDecisionError(PushcacheError, ValueError):
    """A next-buffer distribution puts mass below the feasible floor."""


class PolicyViolationError(PushcacheError, RuntimeError):
    """A policy produced an impossible transition during simulation."""

    def __init__(self, message: str, b: int, x: int, b_next: int):
        super().__init__(message)
        self.b = b
        self.x = x
        self.b_next = b_next


class ConvergenceError(PushcacheError, RuntimeError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        iterations: int,
        residual: float,
        best: Optional[Any] = None,
    ):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.best = best


class SolverDisagreementError(PushcacheError, RuntimeError):
    """Two solvers that must agree on the average cost did not."""

    exit_code = 4

    def __init__(self, message: str, first: float, second: float):
        super().__init__(message)
        self.first = first
        self.second = second
