"""
Reference solvers used to verify the dynamics.

Nothing here depends on the dynamics module: the oracle works directly on the
projected fixed-point characterisation of the regularized-penalized problem
and on the continuation path delta -> 0, epsilon -> infinity.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from app.errors import ConvergenceError, InvalidArgumentError
from app.services.game_model import ConstraintSet, GameModel, check_monotone, lipschitz_bounds, pseudo_gradient
from app.services.penalty_projection import project_box, regularized_penalized_map

logger = logging.getLogger("penaltynash.oracle")

MAX_ITERATIONS = 1_000_000
DYKSTRA_MAX_ITERATIONS = 100_000
RESIDUAL_FLOOR_FACTOR = 16.0
EPS = float(np.finfo(float).eps)


@dataclass
class OracleResult:
    x_star: np.ndarray
    residual: float
    iterations: int
    path: list[dict[str, Any]] | None = None
    residual_history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "x_star": self.x_star.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "path": self.path,
        }


@dataclass(frozen=True)
class PathConfig:
    """
    Continuation delta_k = delta0 rho^k, epsilon_k = epsilon0 rho^(-epsilon_exponent k).

    An exponent above 2 makes delta_k^2 epsilon_k grow without bound.
    """

    delta0: float = 1.0
    epsilon0: float = 1.0
    rho: float = 0.5
    epsilon_exponent: float = 2.5
    max_steps: int = 60
    inner_tol: float = 1e-9
    anderson_memory: int | None = None

    def __post_init__(self):
        if not (self.delta0 > 0 and self.epsilon0 > 0):
            raise InvalidArgumentError("delta0 and epsilon0 must be positive")
        if not 0 < self.rho < 1:
            raise InvalidArgumentError("rho must lie in (0, 1)", rho=self.rho)
        if self.max_steps < 1 or self.inner_tol <= 0:
            raise InvalidArgumentError("max_steps and inner_tol must be positive")


def _require_monotone(game: GameModel):
    if game.is_quadratic:
        report = check_monotone(game.M)
        if not report.monotone:
            raise InvalidArgumentError(
                "pseudo-gradient is not monotone", min_sym_eigenvalue=report.min_sym_eigenvalue
            )


def _lipschitz(game: GameModel, constraints: ConstraintSet | None, delta: float, epsilon: float) -> float:
    est = lipschitz_bounds(game, constraints)
    n = game.n_players
    return float(np.sqrt(n) * est.b1 + np.sqrt(n) * est.b2 * epsilon + delta)


def _scaled_residual(phi: np.ndarray, x: np.ndarray, step: float, constraints: ConstraintSet | None) -> np.ndarray:
    """(x - P[x - step phi]) / step, evaluated without cancellation on unclipped components."""
    if constraints is None:
        return phi
    v = x - step * phi
    lo, hi = constraints.lower, constraints.upper
    return np.where(v < lo, (x - lo) / step, np.where(v > hi, (x - hi) / step, phi))


def solve_regularized_vi(
    game: GameModel,
    constraints: ConstraintSet | None,
    delta: float,
    epsilon: float,
    tol: float = 1e-9,
    x0=None,
    anderson_memory: int | None = None,
    max_iterations: int = MAX_ITERATIONS,
) -> OracleResult:
    """
    Unique solution of the box-constrained VI for F + delta x + epsilon grad P.

    With ``anderson_memory=0`` this is the plain projected iteration with the
    contraction step delta / (L^2 + delta^2), stopped once the scaled
    displacement drops below ``tol``. A positive memory (the default is
    min(N + 1, 10)) applies safeguarded Anderson mixing to the projected map
    with step 1/L and stops on the same scaled natural residual.
    """
    if not delta > 0:
        raise InvalidArgumentError("delta must be positive", delta=delta)
    if epsilon < 0:
        raise InvalidArgumentError("epsilon must be nonnegative", epsilon=epsilon)
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive", tol=tol)
    _require_monotone(game)

    n = game.n_players
    L = _lipschitz(game, constraints, delta, epsilon)
    x = project_box(constraints, np.zeros(n) if x0 is None else np.asarray(x0, dtype=float))
    memory = min(n + 1, 10) if anderson_memory is None else int(anderson_memory)

    def phi_of(z):
        return regularized_penalized_map(game, constraints, delta, epsilon, z)

    if memory <= 0:
        return _plain_iteration(phi_of, constraints, x, delta / (L**2 + delta**2), tol, max_iterations)
    return _anderson_iteration(phi_of, constraints, x, 1.0 / L, tol, memory, max_iterations)


def _plain_iteration(phi_of, constraints, x, step, tol, max_iterations) -> OracleResult:
    history = []
    for k in range(1, max_iterations + 1):
        x_new = project_box(constraints, x - step * phi_of(x))
        res = float(np.abs(x_new - x).max()) / step
        history.append(res)
        x = x_new
        if res <= tol:
            logger.debug("Projected iteration converged after %d iterations (residual %.3e)", k, res)
            return OracleResult(x_star=x, residual=res, iterations=k, residual_history=history)
    raise ConvergenceError("projected iteration did not converge", best=x, residual=history[-1], iterations=max_iterations)


def _anderson_iteration(phi_of, constraints, x, step, tol, memory, max_iterations) -> OracleResult:
    def residual(z):
        return _scaled_residual(phi_of(z), z, step, constraints)

    dX: deque[np.ndarray] = deque(maxlen=memory)
    dG: deque[np.ndarray] = deque(maxlen=memory)
    r = residual(x)
    best_x, best_res = x.copy(), float(np.abs(r).max())
    history = [best_res]

    for k in range(1, max_iterations + 1):
        res = float(np.abs(r).max())
        if res <= tol:
            candidate = project_box(constraints, x)
            r_candidate = residual(candidate)
            res_candidate = float(np.abs(r_candidate).max())
            if res_candidate <= tol:
                logger.debug("Anderson iteration converged after %d iterations (residual %.3e)", k, res_candidate)
                return OracleResult(x_star=candidate, residual=res_candidate, iterations=k, residual_history=history)
            x, r = candidate, r_candidate
            dX.clear()
            dG.clear()

        g = -step * r
        x_next = x + g
        if dX:
            dX_mat = np.column_stack(dX)
            dG_mat = np.column_stack(dG)
            theta = np.linalg.lstsq(dG_mat, g, rcond=None)[0]
            x_next = x + g - (dX_mat + dG_mat) @ theta
        r_next = residual(x_next)

        if dX and np.linalg.norm(r_next) > np.linalg.norm(r):
            # mixing made things worse: restart from a plain step
            dX.clear()
            dG.clear()
            x_next = x + g
            r_next = residual(x_next)

        dX.append(x_next - x)
        dG.append(-step * r_next - g)
        x, r = x_next, r_next
        res = float(np.abs(r).max())
        history.append(res)
        if res < best_res:
            best_x, best_res = x.copy(), res

    raise ConvergenceError("accelerated iteration did not converge", best=best_x, residual=best_res, iterations=max_iterations)


def project_feasible(
    constraints: ConstraintSet | None, v, tol: float = 1e-12, max_iterations: int = DYKSTRA_MAX_ITERATIONS
) -> np.ndarray:
    """Euclidean projection onto boxes intersected with {A x <= b} by Dykstra's alternating projections."""
    v = np.asarray(v, dtype=float)
    if constraints is None:
        return v.copy()
    if not constraints.has_shared:
        return project_box(constraints, v)

    A, b = constraints.A, constraints.b
    norms = np.sum(A**2, axis=1)

    def halfspace(k):
        def project(z):
            if norms[k] == 0.0:
                return z
            return z - max(0.0, (A[k] @ z - b[k]) / norms[k]) * A[k]

        return project

    projections = [lambda z: project_box(constraints, z)] + [halfspace(k) for k in range(A.shape[0])]
    increments = [np.zeros_like(v) for _ in projections]
    x = v.copy()
    for _ in range(max_iterations):
        start = x.copy()
        shift = 0.0
        for p, project in enumerate(projections):
            prev_x = x
            x = project(prev_x - increments[p])
            new_increment = x - (prev_x - increments[p])
            shift = max(shift, float(np.abs(new_increment - increments[p]).max()))
            increments[p] = new_increment
        # a cycle can leave x in place while the corrections still move
        settled = np.abs(x - start).max() <= tol and shift <= tol
        if settled and constraints.box_violation(x) <= tol and constraints.violation(x) <= tol:
            return x
    raise ConvergenceError("Dykstra projection did not converge", best=x, iterations=max_iterations)


def kkt_residual(game: GameModel, constraints: ConstraintSet | None, x, tol: float = 1e-12) -> float:
    """Natural-map residual ||x - P_Q[x - F(x)]||_inf on the full feasible set."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(x - project_feasible(constraints, x - pseudo_gradient(game, x), tol=tol)).max())


def least_norm_ve(
    game: GameModel, constraints: ConstraintSet | None, tol: float = 1e-4, path_cfg: PathConfig | None = None
) -> OracleResult:
    """
    Least-norm variational equilibrium by continuation.

    Each step solves the regularized-penalized problem warm-started from the
    previous one. The path stops once consecutive points are within ``tol``
    and the natural residual on the true feasible set is at most 10 tol.
    """
    cfg = path_cfg or PathConfig()
    if tol <= 0:
        raise InvalidArgumentError("tol must be positive", tol=tol)
    _require_monotone(game)
    shared = constraints is not None and constraints.has_shared

    x = project_box(constraints, np.zeros(game.n_players))
    path: list[dict[str, Any]] = []
    iterations = 0
    kkt = float("inf")
    for k in range(cfg.max_steps):
        delta = cfg.delta0 * cfg.rho**k
        epsilon = cfg.epsilon0 * cfg.rho ** (-cfg.epsilon_exponent * k) if shared else 0.0
        # below this floor the scaled residual is rounding noise of the penalty term
        floor = RESIDUAL_FLOOR_FACTOR * EPS * _lipschitz(game, constraints, delta, epsilon) * max(1.0, float(np.abs(x).max()))
        inner_tol = max(cfg.inner_tol, 0.1 * tol * delta, floor)
        step = solve_regularized_vi(
            game, constraints, delta, epsilon, tol=inner_tol, x0=x, anderson_memory=cfg.anderson_memory
        )
        iterations += step.iterations
        moved = float(np.abs(step.x_star - x).max())
        x = step.x_star
        path.append({"delta": delta, "epsilon": epsilon, "x": x.tolist()})
        kkt = kkt_residual(game, constraints, x)
        logger.debug("Continuation step %d: delta=%.3e epsilon=%.3e moved=%.3e kkt=%.3e", k, delta, epsilon, moved, kkt)
        if k > 0 and moved <= tol and kkt <= 10.0 * tol:
            logger.info("Least-norm continuation converged after %d steps (kkt residual %.3e)", k + 1, kkt)
            return OracleResult(x_star=x, residual=kkt, iterations=iterations, path=path)

    raise ConvergenceError(
        "continuation path did not settle", best=x, steps=cfg.max_steps, kkt_residual=kkt, last_delta=path[-1]["delta"]
    )


def norm_gap_constant(result: OracleResult) -> float:
    """Smallest c with ||x_k||^2 - ||x_last||^2 <= c / (delta_k sqrt(epsilon_k)) along a continuation path."""
    if not result.path:
        raise InvalidArgumentError("result carries no continuation path")
    last = np.asarray(result.path[-1]["x"])
    c = 0.0
    for point in result.path:
        gap = float(np.sum(np.asarray(point["x"]) ** 2) - np.sum(last**2))
        scale = point["delta"] * np.sqrt(point["epsilon"]) if point["epsilon"] > 0 else point["delta"]
        c = max(c, gap * scale)
    return c
