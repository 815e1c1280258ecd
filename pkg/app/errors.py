"""Exception hierarchy for game construction, solvers and integration."""

from __future__ import annotations

from typing import Any


class GameError(Exception):
    """Base class for all errors raised by the library."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


class InvalidArgumentError(GameError, ValueError):
    pass


class UnsupportedOperationError(GameError, NotImplementedError):
    pass


class InfeasibleConstraintsError(InvalidArgumentError):
    """No strictly feasible point was found for the shared constraints."""


class DisconnectedGraphError(InvalidArgumentError):
    pass


class ConvergenceError(GameError):
    """An iterative solver hit its iteration cap.

    ``best`` holds the best iterate seen so far.
    """

    def __init__(self, message: str, best: Any = None, **details: Any):
        super().__init__(message, **details)
        self.best = best


class IntegrationError(GameError):
    """Step size underflow; ``trajectory`` holds what was integrated so far."""

    def __init__(self, message: str, trajectory: Any = None, **details: Any):
        super().__init__(message, **details)
        self.trajectory = trajectory


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)
