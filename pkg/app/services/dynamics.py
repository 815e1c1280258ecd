"""
Right-hand sides of the full-decision, partial-decision and unconstrained
dynamics, plus explicit Runge-Kutta integration with trajectory sampling.

State vectors handed to the integrators are packed as x followed by the
off-diagonal entries of the estimate matrix Y (row-major). The diagonal of Y
is never stored: it is always x.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from app.errors import IntegrationError, InvalidArgumentError
from app.services.game_model import ConstraintSet, GameModel, player_gradients
from app.services.graph import CommGraph, laplacian
from app.services.penalty_projection import project_box, regularized_penalized_map
from app.services.schedules import ParamSchedule, ScheduleSet

logger = logging.getLogger("penaltynash.dynamics")

Method = Literal["rk4", "rk45", "reparam_rk45"]

MONOTONE_WIGGLE = 1e-3


@dataclass
class SwarmState:
    x: np.ndarray
    Y: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).reshape(-1)
        if self.Y is not None:
            Y = np.array(self.Y, dtype=float)
            n = self.x.size
            if Y.shape != (n, n):
                raise InvalidArgumentError(f"estimate matrix must be {n}x{n}", shape=Y.shape)
            np.fill_diagonal(Y, self.x)
            self.Y = Y

    @property
    def n_players(self) -> int:
        return self.x.size

    @classmethod
    def with_estimates(cls, x, off_diagonal: float = 0.0) -> "SwarmState":
        """Every player starts with the same guess for the others' actions."""
        x = np.asarray(x, dtype=float)
        return cls(x=x, Y=np.full((x.size, x.size), off_diagonal))

    @classmethod
    def at_consensus(cls, x) -> "SwarmState":
        x = np.asarray(x, dtype=float)
        return cls(x=x, Y=np.tile(x, (x.size, 1)))

    def disagreement(self) -> float:
        """max_i ||y_i - x||_inf; 0 without estimates."""
        if self.Y is None:
            return 0.0
        return float(np.abs(self.Y - self.x[None, :]).max())

    def pack(self) -> np.ndarray:
        if self.Y is None:
            return self.x.copy()
        return np.concatenate([self.x, self.Y[~np.eye(self.n_players, dtype=bool)]])

    @classmethod
    def unpack(cls, z: np.ndarray, n_players: int, has_estimates: bool) -> "SwarmState":
        x = z[:n_players]
        if not has_estimates:
            return cls(x=x)
        Y = np.empty((n_players, n_players))
        Y[~np.eye(n_players, dtype=bool)] = z[n_players:]
        return cls(x=x, Y=Y)


def full_decision_rhs(
    game: GameModel, constraints: ConstraintSet | None, schedules: ScheduleSet, t: float, x
) -> np.ndarray:
    """sigma (P_Omega[x - gamma Phi(x)] - x) with delta, epsilon, gamma, sigma evaluated at t."""
    p = schedules.at(t)
    x = np.asarray(x, dtype=float)
    phi = regularized_penalized_map(game, constraints, p["delta"], p["epsilon"], x)
    return p["sigma"] * (project_box(constraints, x - p["gamma"] * phi) - x)


def _estimate_penalty_gradient(constraints: ConstraintSet | None, Y: np.ndarray) -> np.ndarray:
    """Entry i: d/dx_i of the penalty evaluated at player i's estimate row."""
    if constraints is None or not constraints.has_shared:
        return np.zeros(Y.shape[0])
    violation = np.maximum(0.0, Y @ constraints.A.T - constraints.b)
    return 2.0 * np.einsum("ik,ki->i", violation, constraints.A)


def _consensus_flow(graph: CommGraph, Y: np.ndarray, w: float) -> np.ndarray:
    return -w * (laplacian(graph) @ Y)


def partial_decision_rhs(
    game: GameModel,
    constraints: ConstraintSet | None,
    schedules: ScheduleSet,
    graph: CommGraph,
    t: float,
    state: SwarmState,
) -> SwarmState:
    """Each player steps on its own estimate row; estimates follow the weighted consensus flow."""
    if state.Y is None:
        raise InvalidArgumentError("partial-decision dynamics need an estimate matrix")
    if graph.n_nodes != state.n_players:
        raise InvalidArgumentError("graph size does not match the number of players")
    p = schedules.at(t)
    x, Y = state.x, state.Y
    phi = player_gradients(game, Y) + p["epsilon"] * _estimate_penalty_gradient(constraints, Y) + p["delta"] * x
    x_dot = p["sigma"] * (project_box(constraints, x - p["gamma"] * phi) - x)
    Y_dot = _consensus_flow(graph, Y, p["w"])
    np.fill_diagonal(Y_dot, x_dot)
    return SwarmState(x=x_dot, Y=Y_dot)


def unconstrained_rhs(
    game: GameModel, delta: ParamSchedule, w: ParamSchedule, graph: CommGraph, t: float, state: SwarmState
) -> SwarmState:
    """Regularized gradient play on own estimates without projection or penalty."""
    if state.Y is None:
        raise InvalidArgumentError("unconstrained dynamics need an estimate matrix")
    x, Y = state.x, state.Y
    x_dot = -(player_gradients(game, Y) + delta.value(t) * x)
    Y_dot = _consensus_flow(graph, Y, w.value(t))
    np.fill_diagonal(Y_dot, x_dot)
    return SwarmState(x=x_dot, Y=Y_dot)


# --- systems -----------------------------------------------------------------


class DynamicalSystem(Protocol):
    n_players: int
    has_estimates: bool
    constraints: ConstraintSet | None

    def rhs(self, t: float, z: np.ndarray) -> np.ndarray: ...

    def sigma(self, t: float) -> float: ...


@dataclass
class FullDecisionSystem:
    game: GameModel
    constraints: ConstraintSet | None
    schedules: ScheduleSet
    has_estimates: bool = field(default=False, init=False)

    @property
    def n_players(self) -> int:
        return self.game.n_players

    def rhs(self, t, z):
        return full_decision_rhs(self.game, self.constraints, self.schedules, t, z)

    def sigma(self, t):
        return float(self.schedules.sigma.value(t))


@dataclass
class PartialDecisionSystem:
    game: GameModel
    constraints: ConstraintSet | None
    schedules: ScheduleSet
    graph: CommGraph
    has_estimates: bool = field(default=True, init=False)

    @property
    def n_players(self) -> int:
        return self.game.n_players

    def rhs(self, t, z):
        state = SwarmState.unpack(z, self.n_players, True)
        return partial_decision_rhs(self.game, self.constraints, self.schedules, self.graph, t, state).pack()

    def sigma(self, t):
        return float(self.schedules.sigma.value(t))


@dataclass
class UnconstrainedSystem:
    game: GameModel
    delta: ParamSchedule
    w: ParamSchedule
    graph: CommGraph
    constraints: ConstraintSet | None = None
    has_estimates: bool = field(default=True, init=False)

    @property
    def n_players(self) -> int:
        return self.game.n_players

    def rhs(self, t, z):
        state = SwarmState.unpack(z, self.n_players, True)
        return unconstrained_rhs(self.game, self.delta, self.w, self.graph, t, state).pack()

    def sigma(self, t):
        return 1.0


@dataclass
class CallableSystem:
    """Plain ODE z' = f(t, z) on an N-vector; mostly for testing the integrators."""

    fn: Callable[[float, np.ndarray], np.ndarray]
    n_players: int
    sigma_fn: Callable[[float], float] | None = None
    constraints: ConstraintSet | None = None
    has_estimates: bool = field(default=False, init=False)

    def rhs(self, t, z):
        return np.asarray(self.fn(t, z), dtype=float)

    def sigma(self, t):
        return 1.0 if self.sigma_fn is None else float(self.sigma_fn(t))


# --- integration -------------------------------------------------------------


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = "rk45"
    horizon: float = 10.0
    h: float = 0.01
    rtol: float = 1e-6
    atol: float = 1e-8
    h_min: float = 1e-12
    h_max: float = 0.1
    sample_stride: int = 1
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in ("rk4", "rk45", "reparam_rk45"):
            raise InvalidArgumentError("unknown integration method", method=self.method)
        for name in ("horizon", "h", "rtol", "atol", "h_min", "h_max"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive", value=getattr(self, name))
        if self.h_min > self.h_max:
            raise InvalidArgumentError("h_min must not exceed h_max", h_min=self.h_min, h_max=self.h_max)
        if self.sample_stride < 1 or self.max_steps < 1:
            raise InvalidArgumentError("sample_stride and max_steps must be positive")


@dataclass
class IntegratorStats:
    steps: int = 0
    rejected: int = 0
    final_step: float = 0.0
    rhs_evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "rejected": self.rejected,
            "final_step": self.final_step,
            "rhs_evaluations": self.rhs_evaluations,
        }


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    xs: list[np.ndarray] = field(default_factory=list)
    Ys: list[np.ndarray | None] = field(default_factory=list)
    errs: list[float | None] = field(default_factory=list)
    violations: list[float] = field(default_factory=list)
    stats: IntegratorStats = field(default_factory=IntegratorStats)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> SwarmState:
        return SwarmState(x=self.xs[-1], Y=self.Ys[-1])

    def record(self, t: float, state: SwarmState, ref: np.ndarray | None, constraints: ConstraintSet | None):
        self.times.append(float(t))
        self.xs.append(state.x.copy())
        self.Ys.append(None if state.Y is None else state.Y.copy())
        self.errs.append(None if ref is None else float(np.abs(state.x - ref).max()))
        self.violations.append(0.0 if constraints is None else constraints.violation(state.x))


# Fehlberg 4(5) tableau
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _rkf45_step(f, t, y, h):
    ks = []
    for stage in range(6):
        yi = y.copy()
        for coeff, k in zip(_A[stage], ks, strict=False):
            yi += h * coeff * k
        ks.append(f(t + _C[stage] * h, yi))
    K = np.array(ks)
    y5 = y + h * (_B5 @ K)
    err = h * ((_B5 - _B4) @ K)
    return y5, err


def _reparameterized(system: DynamicalSystem):
    """Augmented field in rescaled time: state [t, z], dt/dtau = 1/sigma, dz/dtau = rhs/sigma."""

    def f(_tau, yz):
        t = float(yz[0])
        s = system.sigma(t)
        return np.concatenate([[1.0 / s], system.rhs(t, yz[1:]) / s])

    return f


def integrate(
    system: DynamicalSystem, initial: SwarmState, cfg: IntegratorConfig, ref=None
) -> Trajectory:
    """
    Integrate a system from ``initial`` over ``cfg.horizon``.

    For ``reparam_rk45`` the horizon is measured in rescaled time tau with
    dtau = sigma(t) dt; recorded sample times are always original times t.
    Samples are taken every ``sample_stride`` accepted steps, plus the first
    and last state.
    """
    n = system.n_players
    if initial.n_players != n:
        raise InvalidArgumentError("initial state has the wrong number of players", expected=n, got=initial.n_players)
    if system.has_estimates and initial.Y is None:
        initial = SwarmState.with_estimates(initial.x)
    elif not system.has_estimates and initial.Y is not None:
        initial = SwarmState(x=initial.x)
    ref_arr = None if ref is None else np.asarray(ref, dtype=float)

    traj = Trajectory()
    stats = traj.stats
    reparam = cfg.method == "reparam_rk45"

    def field_fn(t, y):
        stats.rhs_evaluations += 1
        return f(t, y)

    f = _reparameterized(system) if reparam else system.rhs
    y = initial.pack()
    if reparam:
        y = np.concatenate([[0.0], y])

    def state_of(y_vec):
        z = y_vec[1:] if reparam else y_vec
        return SwarmState.unpack(z, n, system.has_estimates)

    def time_of(s, y_vec):
        return float(y_vec[0]) if reparam else s

    s, T = 0.0, cfg.horizon
    traj.record(0.0, state_of(y), ref_arr, system.constraints)
    last_recorded = 0
    logger.debug("Integrating %s over horizon %.4g (%d state entries)", cfg.method, T, y.size)

    if cfg.method == "rk4":
        n_steps = max(1, math.ceil(T / cfg.h - 1e-9))
        for k in range(n_steps):
            h = min(cfg.h, T - s)
            y = _rk4_step(field_fn, s, y, h)
            s = T if k == n_steps - 1 else s + h
            stats.steps += 1
            stats.final_step = h
            if not np.all(np.isfinite(y)):
                raise IntegrationError("state became non-finite", trajectory=traj, t=s)
            if stats.steps % cfg.sample_stride == 0:
                traj.record(s, state_of(y), ref_arr, system.constraints)
                last_recorded = stats.steps
    else:
        h = min(cfg.h_max, 0.01 * T)
        while s < T:
            if stats.steps + stats.rejected >= cfg.max_steps:
                raise IntegrationError("maximum number of steps exceeded", trajectory=traj, t=time_of(s, y))
            if h < cfg.h_min:
                raise IntegrationError("step size underflow", trajectory=traj, t=time_of(s, y), h=h)
            step = min(h, T - s)
            last_step = step >= T - s
            y_new, err_vec = _rkf45_step(field_fn, s, y, step)
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(err_vec) / scale)) if np.all(np.isfinite(y_new)) else math.inf

            if err <= 1.0:
                s = T if last_step else s + step
                y = y_new
                stats.steps += 1
                stats.final_step = step
                if stats.steps % cfg.sample_stride == 0:
                    traj.record(time_of(s, y), state_of(y), ref_arr, system.constraints)
                    last_recorded = stats.steps
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
            else:
                stats.rejected += 1
                factor = 0.2 if not math.isfinite(err) else min(1.0, max(0.2, 0.9 * err**-0.2))
            h = min(cfg.h_max, step * factor)

    if last_recorded != stats.steps:
        traj.record(time_of(s, y), state_of(y), ref_arr, system.constraints)
    logger.info(
        "Integration finished: %d steps, %d rejected, final step %.3e", stats.steps, stats.rejected, stats.final_step
    )
    return traj


# --- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryMetrics:
    final_err: float | None
    final_violation: float
    err_monotone_after_transient: bool | None
    transient_cutoff: float | None
    final_disagreement: float

    def to_dict(self) -> dict:
        return {
            "final_err": self.final_err,
            "final_violation": self.final_violation,
            "err_monotone_after_transient": self.err_monotone_after_transient,
            "transient_cutoff": self.transient_cutoff,
            "final_disagreement": self.final_disagreement,
        }


def metrics(trajectory: Trajectory, constraints: ConstraintSet | None = None, ref=None) -> TrajectoryMetrics:
    """
    Summary of a trajectory.

    The error is considered monotone after the transient when, from the first
    sample below half the initial error on, no sample exceeds the running
    minimum by more than 1e-3.
    """
    if not trajectory.times:
        raise InvalidArgumentError("trajectory is empty")
    xs = np.array(trajectory.xs)
    if ref is not None:
        errs = np.abs(xs - np.asarray(ref, dtype=float)[None, :]).max(axis=1)
    elif all(e is not None for e in trajectory.errs):
        errs = np.array(trajectory.errs, dtype=float)
    else:
        errs = None
    if constraints is not None:
        final_violation = constraints.violation(xs[-1])
    else:
        final_violation = float(trajectory.violations[-1])
    disagreement = trajectory.final_state.disagreement()

    if errs is None:
        return TrajectoryMetrics(None, final_violation, None, None, disagreement)

    below = np.flatnonzero(errs < 0.5 * errs[0]) if errs[0] > 0 else np.array([0])
    if below.size == 0:
        return TrajectoryMetrics(float(errs[-1]), final_violation, False, None, disagreement)
    cut = int(below[0])
    tail = errs[cut:]
    running_min = np.minimum.accumulate(tail)
    monotone = bool(np.all(tail[1:] <= running_min[:-1] + MONOTONE_WIGGLE))
    return TrajectoryMetrics(float(errs[-1]), final_violation, monotone, float(trajectory.times[cut]), disagreement)
