"""Quadratic penalty of the shared constraint, box projection and the regularized maps."""

from dataclasses import dataclass

import numpy as np

from app.errors import InvalidArgumentError
from app.services.game_model import ConstraintSet, GameModel, pseudo_gradient


@dataclass(frozen=True)
class PenaltyEval:
    value: float
    gradient: np.ndarray
    violation: np.ndarray


def penalty_value(A, b, x) -> PenaltyEval:
    """P(x) = sum_k max(0, (Ax - b)_k)^2 with gradient 2 A^T max(0, Ax - b)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape != (b.size, x.size):
        raise InvalidArgumentError("dimension mismatch in penalty", A_shape=A.shape, b_len=b.size, x_len=x.size)
    violation = np.maximum(0.0, A @ x - b)
    return PenaltyEval(value=float(violation @ violation), gradient=2.0 * A.T @ violation, violation=violation)


def penalty_gradient(constraints: ConstraintSet | None, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if constraints is None or not constraints.has_shared:
        return np.zeros_like(x)
    return penalty_value(constraints.A, constraints.b, x).gradient


def project_box(constraints: ConstraintSet | None, v) -> np.ndarray:
    """Componentwise clamp onto the boxes; identity when there are no constraints."""
    v = np.asarray(v, dtype=float)
    if constraints is None:
        return v.copy()
    return np.clip(v, constraints.lower, constraints.upper)


def regularized_penalized_map(
    game: GameModel, constraints: ConstraintSet | None, delta: float, epsilon: float, x
) -> np.ndarray:
    """F(x) + delta x + epsilon grad P(x). With epsilon = 0 this is the regularized map alone."""
    if delta < 0 or epsilon < 0:
        raise InvalidArgumentError("delta and epsilon must be nonnegative", delta=delta, epsilon=epsilon)
    x = np.asarray(x, dtype=float)
    out = pseudo_gradient(game, x) + delta * x
    if epsilon > 0:
        out = out + epsilon * penalty_gradient(constraints, x)
    return out
