"""
Config-driven experiment runs: wiring of game, graph, schedules and
integrator, schedule checks, oracle reference and output files.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from app.constants import SCHEMA_VERSION
from app.errors import InvalidArgumentError
from app.schemas import (
    ConstScheduleSpec,
    DerivedGammaSpec,
    ExperimentConfig,
    ExpScheduleSpec,
    GraphConfig,
    PowerScheduleSpec,
    SumScheduleSpec,
)
from app.services import game_model, graph as graph_mod
from app.services.dynamics import (
    FullDecisionSystem,
    IntegratorConfig,
    PartialDecisionSystem,
    SwarmState,
    Trajectory,
    UnconstrainedSystem,
    integrate,
    metrics,
)
from app.services.export import write_json, write_trajectory_csv
from app.services.game_model import ConstraintSet, GameModel, LipschitzEstimates, lipschitz_bounds
from app.services.graph import CommGraph
from app.services.oracle import OracleResult, PathConfig, least_norm_ve
from app.services.schedules import (
    ConditionReport,
    Constant,
    Exponential,
    ParamSchedule,
    Power,
    ScheduleSet,
    Sum,
    check_theorem1_conditions,
    check_theorem3_conditions,
    derive_gamma,
)

logger = logging.getLogger("penaltynash.experiments")


@dataclass
class ExperimentSetup:
    cfg: ExperimentConfig
    game: GameModel
    constraints: ConstraintSet | None
    graph: CommGraph | None
    estimates: LipschitzEstimates
    schedules: ScheduleSet

    @property
    def n_players(self) -> int:
        return self.game.n_players


@dataclass
class RunResult:
    summary: dict[str, Any]
    trajectory: Trajectory
    trajectory_path: Path
    summary_path: Path


def build_graph(cfg: ExperimentConfig) -> CommGraph | None:
    if cfg.graph is None:
        return None
    if isinstance(cfg.graph, GraphConfig):
        return graph_mod.from_edges(cfg.graph.n, cfg.graph.edges)
    return graph_mod.parse_graph_spec(cfg.graph)


def build_game(cfg: ExperimentConfig, graph: CommGraph | None) -> tuple[GameModel, ConstraintSet | None]:
    spec = cfg.game
    constraints: ConstraintSet | None = None
    if spec.builtin in ("five-player", "five-player-noshared"):
        game, constraints = game_model.five_player(shared=spec.builtin == "five-player")
    elif spec.builtin == "robot-swarm":
        if graph is None:
            raise InvalidArgumentError("robot-swarm needs a graph")
        game, constraints = game_model.robot_swarm(spec.coefficients, graph)
    elif spec.builtin == "consensus":
        if graph is None:
            raise InvalidArgumentError("consensus needs a graph")
        game = game_model.consensus(graph)
    else:
        game = GameModel.quadratic(spec.matrix, spec.offset, name=cfg.name)

    if cfg.constraints is not None:
        c = cfg.constraints
        constraints = ConstraintSet.from_boxes(c.boxes, A=c.A, b=c.b)
    if cfg.algorithm == "unconstrained" and constraints is not None:
        logger.warning("Ignoring constraints for the unconstrained algorithm")
        constraints = None
    return game, constraints


def build_estimates(cfg: ExperimentConfig, game: GameModel, constraints: ConstraintSet | None) -> LipschitzEstimates:
    est = lipschitz_bounds(game, constraints)
    if cfg.lipschitz is None:
        return est
    o = cfg.lipschitz
    return LipschitzEstimates(
        b1=o.b1 if o.b1 is not None else est.b1,
        b2=o.b2 if o.b2 is not None else est.b2,
        b3=o.b3 if o.b3 is not None else est.b3,
        radius=est.radius,
    )


def build_schedule(spec, **derived: Any) -> ParamSchedule:
    """Turn a schedule spec into a schedule; ``derived`` supplies the context of derived-gamma."""
    if isinstance(spec, ConstScheduleSpec):
        return Constant(spec.c)
    if isinstance(spec, PowerScheduleSpec):
        return Power(spec.c, spec.p)
    if isinstance(spec, ExpScheduleSpec):
        return Exponential(spec.c, spec.r)
    if isinstance(spec, SumScheduleSpec):
        return Sum(tuple(build_schedule(term, **derived) for term in spec.terms))
    if isinstance(spec, DerivedGammaSpec):
        return derive_gamma(
            derived["n_players"],
            spec.b1 if spec.b1 is not None else derived["b1"],
            spec.b2 if spec.b2 is not None else derived["b2"],
            derived["delta"],
            derived["epsilon"],
            spec.variant or derived["variant"],
        )
    raise InvalidArgumentError("unknown schedule spec", spec=repr(spec))


def build_schedules(cfg: ExperimentConfig, n_players: int, estimates: LipschitzEstimates) -> ScheduleSet:
    s = cfg.schedules
    delta = build_schedule(s.delta)
    epsilon = build_schedule(s.epsilon)
    gamma = build_schedule(
        s.gamma,
        n_players=n_players,
        b1=estimates.b1,
        b2=estimates.b2,
        delta=delta,
        epsilon=epsilon,
        variant="partial" if cfg.algorithm == "partial" else "full",
    )
    return ScheduleSet(delta=delta, epsilon=epsilon, gamma=gamma, sigma=build_schedule(s.sigma), w=build_schedule(s.w))


def prepare(cfg: ExperimentConfig) -> ExperimentSetup:
    graph = build_graph(cfg)
    game, constraints = build_game(cfg, graph)
    estimates = build_estimates(cfg, game, constraints)
    schedules = build_schedules(cfg, game.n_players, estimates)
    return ExperimentSetup(cfg, game, constraints, graph, estimates, schedules)


def integrator_config(cfg: ExperimentConfig) -> IntegratorConfig:
    return IntegratorConfig(**cfg.integrator.model_dump())


def initial_state(cfg: ExperimentConfig) -> SwarmState:
    init = cfg.initial
    if init.Y is not None:
        return SwarmState(x=init.x, Y=init.Y)
    if cfg.algorithm == "full":
        return SwarmState(x=init.x)
    return SwarmState.with_estimates(init.x, init.y_offdiag)


def check_schedules(cfg: ExperimentConfig, setup: ExperimentSetup | None = None) -> ConditionReport | None:
    """Grid check of the convergence conditions matching the algorithm; None for unconstrained runs."""
    setup = setup or prepare(cfg)
    est, n = setup.estimates, setup.n_players
    if cfg.algorithm == "full":
        return check_theorem1_conditions(setup.schedules, n, est.b1, est.b2, cfg.check_horizon, cfg.check_grid_size)
    if cfg.algorithm == "partial":
        assert setup.graph is not None
        return check_theorem3_conditions(
            setup.schedules,
            n,
            est.b1,
            est.b2,
            est.b3,
            graph_mod.lambda_min_all(setup.graph),
            cfg.check_horizon,
            cfg.check_grid_size,
        )
    return None


def solve_oracle(cfg: ExperimentConfig, setup: ExperimentSetup | None = None) -> OracleResult:
    setup = setup or prepare(cfg)
    o = cfg.oracle
    path_cfg = PathConfig(
        delta0=o.delta0,
        epsilon0=o.epsilon0,
        rho=o.rho,
        epsilon_exponent=o.epsilon_exponent,
        max_steps=o.max_steps,
    )
    return least_norm_ve(setup.game, setup.constraints, tol=o.tol, path_cfg=path_cfg)


def build_system(setup: ExperimentSetup):
    algorithm = setup.cfg.algorithm
    if algorithm == "full":
        return FullDecisionSystem(setup.game, setup.constraints, setup.schedules)
    assert setup.graph is not None
    if algorithm == "partial":
        return PartialDecisionSystem(setup.game, setup.constraints, setup.schedules, setup.graph)
    return UnconstrainedSystem(setup.game, setup.schedules.delta, setup.schedules.w, setup.graph)


def _published_comparison(published: list[float] | None, **points: np.ndarray | None) -> dict[str, Any] | None:
    if published is None:
        return None
    values = np.asarray(published, dtype=float)
    out: dict[str, Any] = {"values": values.tolist()}
    for name, point in points.items():
        if point is not None:
            out[f"max_abs_diff_{name}"] = float(np.abs(point - values).max())
    return out


def run_experiment(cfg: ExperimentConfig, output_dir: Path | str) -> RunResult:
    """Integrate the configured dynamics and write trajectory CSV and summary JSON into ``output_dir``."""
    output_dir = Path(output_dir)
    logger.info("Running experiment %s (%s)", cfg.name, cfg.algorithm)
    setup = prepare(cfg)

    report = check_schedules(cfg, setup)
    if report is not None and not report.passed:
        logger.warning(
            "Schedules of %s fail %d condition(s); running anyway", cfg.name, len(report.failures())
        )

    oracle_result: OracleResult | None = None
    reference: np.ndarray | None = None
    if cfg.reference == "oracle":
        oracle_result = solve_oracle(cfg, setup)
        reference = oracle_result.x_star
    elif isinstance(cfg.reference, list):
        reference = np.asarray(cfg.reference, dtype=float)

    trajectory = integrate(build_system(setup), initial_state(cfg), integrator_config(cfg), ref=reference)
    summary_metrics = metrics(trajectory, setup.constraints, reference)

    trajectory_path = write_trajectory_csv(trajectory, output_dir / cfg.output.trajectory)
    summary: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.name,
        "algorithm": cfg.algorithm,
        "n_players": setup.n_players,
        **summary_metrics.to_dict(),
        "final_time": trajectory.times[-1],
        "final_state": trajectory.xs[-1].tolist(),
        "reference": None if reference is None else reference.tolist(),
        "lipschitz": {"b1": setup.estimates.b1, "b2": setup.estimates.b2, "b3": setup.estimates.b3},
        "schedule_report": None if report is None else report.to_dict(),
        "oracle_result": None if oracle_result is None else oracle_result.to_dict(),
        "integrator_stats": trajectory.stats.to_dict(),
        "published_comparison": _published_comparison(
            cfg.published_equilibrium, final_state=trajectory.xs[-1], oracle=reference
        ),
        "trajectory_file": str(trajectory_path),
    }
    summary_path = write_json(summary, output_dir / cfg.output.summary)
    logger.info("Experiment %s finished: final_err=%s", cfg.name, summary["final_err"])
    return RunResult(summary, trajectory, trajectory_path, summary_path)
