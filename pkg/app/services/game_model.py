"""
Games with scalar actions: pseudo-gradient evaluation, monotonicity checks,
Lipschitz estimates and the builtin example games.

A game is either quadratic (F(x) = Mx + m, row i is the partial gradient of
player i's cost in its own action) or given by a per-player gradient callback.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from app.errors import InfeasibleConstraintsError, InvalidArgumentError, UnsupportedOperationError
from app.services.graph import CommGraph
from app.services.linalg import min_symmetric_eigenvalue

logger = logging.getLogger("penaltynash.game_model")

SLATER_STEPS = 100
MONOTONE_RELATIVE_TOL = 1e-9

# per-player partial gradient: (i, y) -> d f_i / d x_i evaluated at the profile y
PlayerGradient = Callable[[int, np.ndarray], float]


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_vector(x, n: int, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise InvalidArgumentError(f"{name} must have length {n}", shape=arr.shape)
    return arr


@dataclass(frozen=True)
class LipschitzEstimates:
    """Constants consumed by the schedule formulas.

    b1: Lipschitz constant of F, b2: of the penalty gradient, b3: of the
    per-player gradients in the estimate argument. b1 and b3 are valid on the
    ball of the given radius.
    """

    b1: float
    b2: float
    b3: float
    radius: float = 1.0

    def __post_init__(self):
        for name in ("b1", "b2", "b3", "radius"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidArgumentError(f"{name} must be positive and finite", value=value)


@dataclass(frozen=True)
class GameModel:
    n_players: int
    M: np.ndarray | None = None
    m: np.ndarray | None = None
    gradient: PlayerGradient | None = field(default=None, compare=False)
    lipschitz: LipschitzEstimates | None = None
    name: str = "custom"

    def __post_init__(self):
        n = self.n_players
        if n < 1:
            raise InvalidArgumentError("a game needs at least one player", n_players=n)
        if self.gradient is None:
            if self.M is None:
                raise InvalidArgumentError("quadratic game needs a matrix M")
            M = np.asarray(self.M, dtype=float)
            m = np.zeros(n) if self.m is None else np.asarray(self.m, dtype=float)
            if M.shape != (n, n):
                raise InvalidArgumentError(f"M must be {n}x{n}", shape=M.shape)
            if m.shape != (n,):
                raise InvalidArgumentError(f"m must have length {n}", shape=m.shape)
            if not (np.all(np.isfinite(M)) and np.all(np.isfinite(m))):
                raise InvalidArgumentError("M and m must be finite")
            object.__setattr__(self, "M", _frozen(M))
            object.__setattr__(self, "m", _frozen(m))
        elif self.M is not None:
            raise InvalidArgumentError("a game is either quadratic or callback, not both")

    @property
    def is_quadratic(self) -> bool:
        return self.gradient is None

    @classmethod
    def quadratic(cls, M, m=None, name: str = "custom") -> "GameModel":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(n_players=M.shape[0], M=M, m=m, name=name)

    @classmethod
    def from_callback(
        cls, n_players: int, gradient: PlayerGradient, lipschitz: LipschitzEstimates | None = None, name: str = "custom"
    ) -> "GameModel":
        return cls(n_players=n_players, gradient=gradient, lipschitz=lipschitz, name=name)


@dataclass(frozen=True)
class MonotonicityReport:
    monotone: bool
    strongly_monotone: bool
    min_sym_eigenvalue: float


@dataclass(frozen=True)
class ConstraintSet:
    """Per-player boxes plus optional shared constraint A x - b <= 0.

    Construction validates the boxes and, when a shared constraint is given,
    searches for a strictly feasible point (kept in ``slater_point``).
    """

    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    slater_point: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or lower.size == 0:
            raise InvalidArgumentError("lower and upper bounds must be nonempty and of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InvalidArgumentError("boxes must be bounded")
        if np.any(lower > upper):
            bad = np.flatnonzero(lower > upper)
            raise InvalidArgumentError("each box needs lo <= hi", players=(bad + 1).tolist())
        object.__setattr__(self, "lower", _frozen(lower))
        object.__setattr__(self, "upper", _frozen(upper))

        if (self.A is None) != (self.b is None):
            raise InvalidArgumentError("shared constraint needs both A and b")
        if self.A is None:
            return
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[1] != lower.size or A.shape[0] != b.size:
            raise InvalidArgumentError("A must be n x N and b of length n", A_shape=A.shape, b_len=b.size)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidArgumentError("A and b must be finite")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "slater_point", _frozen(self._find_slater_point()))

    @classmethod
    def from_boxes(cls, boxes: Sequence[Sequence[float]], A=None, b=None) -> "ConstraintSet":
        arr = np.asarray(boxes, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidArgumentError("boxes must be a list of [lo, hi] pairs")
        return cls(lower=arr[:, 0], upper=arr[:, 1], A=A, b=b)

    @property
    def n_players(self) -> int:
        return self.lower.size

    @property
    def has_shared(self) -> bool:
        return self.A is not None and self.A.shape[0] > 0

    @property
    def boxes(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist(), strict=True))

    def g(self, x) -> np.ndarray:
        if not self.has_shared:
            return np.zeros(0)
        return self.A @ np.asarray(x, dtype=float) - self.b

    def violation(self, x) -> float:
        """max_k max(0, g_k(x)); 0 without a shared constraint."""
        g = self.g(x)
        return float(max(0.0, g.max())) if g.size else 0.0

    def box_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(max(0.0, (self.lower - x).max(), (x - self.upper).max()))

    def _find_slater_point(self) -> np.ndarray:
        A, b = self.A, self.b
        assert A is not None and b is not None
        norms = np.sum(A**2, axis=1)
        margin = 1e-3 * (1.0 + float(np.abs(b).max(initial=0.0)))
        x = 0.5 * (self.lower + self.upper)
        best, best_g = x.copy(), float((A @ x - b).max())

        for _ in range(SLATER_STEPS):
            g = A @ x - b
            k = int(np.argmax(g))
            if g[k] < -margin or norms[k] == 0.0:
                break
            x = np.clip(x - (g[k] + margin) / norms[k] * A[k], self.lower, self.upper)
            gmax = float((A @ x - b).max())
            if gmax < best_g:
                best, best_g = x.copy(), gmax

        if best_g >= 0.0:
            raise InfeasibleConstraintsError(
                "no strictly feasible point found for the shared constraint", best_max_g=best_g, best_point=best
            )
        logger.debug("Strictly feasible point found with max g = %.3e", best_g)
        return best


def pseudo_gradient(game: GameModel, x) -> np.ndarray:
    x = _check_vector(x, game.n_players)
    if game.is_quadratic:
        return game.M @ x + game.m
    assert game.gradient is not None
    return np.array([game.gradient(i, x) for i in range(game.n_players)], dtype=float)


def player_gradients(game: GameModel, Y) -> np.ndarray:
    """Entry i is player i's own partial gradient evaluated at its estimate row Y[i]."""
    Y = np.asarray(Y, dtype=float)
    n = game.n_players
    if Y.shape != (n, n):
        raise InvalidArgumentError(f"estimate matrix must be {n}x{n}", shape=Y.shape)
    if game.is_quadratic:
        return np.einsum("ij,ij->i", game.M, Y) + game.m
    assert game.gradient is not None
    return np.array([game.gradient(i, Y[i]) for i in range(n)], dtype=float)


def affine_form(game: GameModel) -> tuple[np.ndarray, np.ndarray]:
    if not game.is_quadratic:
        raise UnsupportedOperationError("affine form exists only for quadratic games", game=game.name)
    return game.M, game.m


def check_monotone(M, tol: float | None = None) -> MonotonicityReport:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError("M must be square", shape=M.shape)
    if tol is None:
        tol = MONOTONE_RELATIVE_TOL * float(np.linalg.norm(M))
    if tol < 0:
        raise InvalidArgumentError("tol must be nonnegative", tol=tol)
    lam = min_symmetric_eigenvalue(0.5 * (M + M.T))
    return MonotonicityReport(monotone=lam >= -tol, strongly_monotone=lam > tol, min_sym_eigenvalue=lam)


def lipschitz_bounds(game: GameModel, constraints: ConstraintSet | None = None, radius: float = 1.0) -> LipschitzEstimates:
    """
    Conservative closed-form constants.

    For quadratic games b1 = b3 = max_i ||row_i(M)||_2 (global, so any radius
    works) and b2 = 2 max_i sum_k |A_ki| ||A_k||_2. Degenerate zero bounds are
    replaced by 1, which is still a valid upper bound.
    """
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive", radius=radius)
    if not game.is_quadratic:
        if game.lipschitz is None:
            raise UnsupportedOperationError("callback games need user-supplied Lipschitz estimates", game=game.name)
        est = game.lipschitz
        return LipschitzEstimates(b1=est.b1, b2=est.b2, b3=est.b3, radius=radius)

    b1 = float(np.linalg.norm(game.M, axis=1).max())
    b2 = 0.0
    if constraints is not None and constraints.has_shared:
        A = constraints.A
        b2 = 2.0 * float((np.abs(A) * np.linalg.norm(A, axis=1)[:, None]).sum(axis=0).max())
    b1 = b1 if b1 > 0 else 1.0
    b2 = b2 if b2 > 0 else 1.0
    return LipschitzEstimates(b1=b1, b2=b2, b3=b1, radius=radius)


# --- builtin games -----------------------------------------------------------

FIVE_PLAYER_M = [
    [2.0, -1.0, 0.0, 0.0, -1.0],
    [-1.0, 3.0, -1.0, -1.0, 0.0],
    [0.0, -1.0, 1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0, 1.0],
]


def five_player_boxes() -> list[tuple[float, float]]:
    return [(-float(i), float(i)) for i in range(1, 6)]


def five_player(shared: bool = True) -> tuple[GameModel, ConstraintSet]:
    """Five players with boxes [-i, i] and, when ``shared``, the constraint sum(x) + 1 <= 0."""
    game = GameModel.quadratic(FIVE_PLAYER_M, np.zeros(5), name="five-player" if shared else "five-player-noshared")
    if shared:
        return game, ConstraintSet.from_boxes(five_player_boxes(), A=[[1.0] * 5], b=[-1.0])
    return game, ConstraintSet.from_boxes(five_player_boxes())


def five_player_noshared() -> tuple[GameModel, ConstraintSet]:
    return five_player(shared=False)


def robot_swarm(coefficients: Sequence[float], graph: CommGraph) -> tuple[GameModel, ConstraintSet]:
    """
    Robots on a line: f_i = a_i (x_i - i)^2 + (1 - a_i) sum_{j in N_i} (x_i - x_j)^2.

    Positions are limited to [0, 10] and neighbouring robots must stay within
    distance 1 of each other (two shared rows per edge).
    """
    a = np.asarray(coefficients, dtype=float)
    n = graph.n_nodes
    if a.shape != (n,):
        raise InvalidArgumentError("need one coefficient per robot", n_coefficients=a.size, n_nodes=n)
    if np.any((a < 0) | (a > 1)):
        raise InvalidArgumentError("coefficients must lie in [0, 1]")

    adjacency = (graph.weights > 0).astype(float)
    degree = adjacency.sum(axis=1)
    M = -2.0 * (1.0 - a)[:, None] * adjacency
    M[np.diag_indices(n)] = 2.0 * a + 2.0 * (1.0 - a) * degree
    m = -2.0 * a * np.arange(1, n + 1)

    rows = []
    for i, j, _ in graph.edges():
        row = np.zeros(n)
        row[i], row[j] = 1.0, -1.0
        rows.extend([row, -row])
    A = np.array(rows) if rows else None
    b = np.ones(len(rows)) if rows else None
    constraints = ConstraintSet(lower=np.zeros(n), upper=np.full(n, 10.0), A=A, b=b)
    return GameModel.quadratic(M, m, name="robot-swarm"), constraints


def consensus(graph: CommGraph) -> GameModel:
    """f_i = sum_{j in N_i} (x_i - x_j)^2, i.e. F(x) = 2 L x. Played without constraints."""
    adjacency = (graph.weights > 0).astype(float)
    M = 2.0 * (np.diag(adjacency.sum(axis=1)) - adjacency)
    return GameModel.quadratic(M, np.zeros(graph.n_nodes), name="consensus")
