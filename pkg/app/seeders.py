"""Builtin experiment catalogue."""

import copy
import logging
import math

from app.constants import (
    FIVE_PLAYER_GRAPH,
    FIVE_PLAYER_INITIAL_X,
    ROBOT_GRAPH,
    ROBOT_INITIAL_X,
    ROBOT_PUBLISHED_EQUILIBRIUM,
)
from app.errors import InvalidArgumentError
from app.schemas import ExperimentConfig

logger = logging.getLogger("penaltynash.seeders")

# Lipschitz constants the closed-form bounds give for the five-player game.
_B1_FIVE = math.sqrt(12.0)
_B2_FIVE = 2.0 * math.sqrt(5.0)


def _const(c: float) -> dict:
    return {"kind": "const", "c": c}


def _power(c: float, p: float) -> dict:
    return {"kind": "power", "c": c, "p": p}


def _exp(c: float, r: float) -> dict:
    return {"kind": "exp", "c": c, "r": r}


def _exponential_schedules(variant: str) -> dict:
    """Exponential family: delta = b1 e^{-t/10}, eps = (b1/b2) e^{3t/10}, sigma = e^{1.6 t}."""
    return {
        "delta": _exp(_B1_FIVE, -0.1),
        "epsilon": _exp(_B1_FIVE / _B2_FIVE, 0.3),
        "gamma": {"kind": "derived-gamma", "variant": variant},
        "sigma": _exp(1.0, 1.6),
        "w": _exp(60.0, 1.6),
    }


def _five_player_power_schedules(shared: bool = True) -> dict:
    # without a shared constraint the penalty term drops out of gamma
    return {
        "delta": _power(0.1, -0.5),
        "epsilon": _power(20.0, 1.2),
        "gamma": {"kind": "derived-gamma", "variant": "partial", "b1": 5.0, "b2": 5.0 if shared else 0.0},
        "sigma": _power(1.0, 5.0),
        "w": {"kind": "sum", "terms": [_const(500.0), _power(500.0, 9.0)]},
    }


# The printed schedules grow polynomially, so the stiffness of the estimate
# consensus grows with them; horizons are kept short enough for explicit RK45.
BUILTIN_EXPERIMENTS: dict[str, dict] = {
    "paper-5player": {
        "name": "paper-5player",
        "description": "Five-player game with a shared constraint, partial-decision dynamics on a ring",
        "game": {"builtin": "five-player"},
        "graph": FIVE_PLAYER_GRAPH,
        "algorithm": "partial",
        "schedules": _five_player_power_schedules(),
        "integrator": {"method": "reparam_rk45", "horizon": 2.0, "h_max": 0.05, "sample_stride": 10},
        "initial": {"x": FIVE_PLAYER_INITIAL_X},
        "check_horizon": 10.0,
    },
    "paper-5player-noshared": {
        "name": "paper-5player-noshared",
        "description": "Five-player game without the shared constraint, partial-decision dynamics",
        "game": {"builtin": "five-player-noshared"},
        "graph": FIVE_PLAYER_GRAPH,
        "algorithm": "partial",
        "schedules": _five_player_power_schedules(shared=False),
        "integrator": {"method": "reparam_rk45", "horizon": 2.0, "h_max": 0.05, "sample_stride": 10},
        "initial": {"x": FIVE_PLAYER_INITIAL_X},
        "check_horizon": 10.0,
    },
    "paper-5player-unregularized": {
        "name": "paper-5player-unregularized",
        "description": "Five-player game without shared constraint and without Tikhonov regularization",
        "game": {"builtin": "five-player-noshared"},
        "graph": FIVE_PLAYER_GRAPH,
        "algorithm": "partial",
        "schedules": {
            "delta": _const(0.0),
            "epsilon": _const(0.0),
            "gamma": _const(0.1),
            "sigma": _const(1.0),
            "w": _const(500.0),
        },
        "integrator": {"method": "rk45", "horizon": 20.0, "h_max": 0.05, "sample_stride": 20},
        "initial": {"x": FIVE_PLAYER_INITIAL_X},
    },
    "paper-robots": {
        "name": "paper-robots",
        "description": "Robots on a line keeping neighbours within distance 1, partial-decision dynamics",
        "game": {"builtin": "robot-swarm"},
        "graph": ROBOT_GRAPH,
        "algorithm": "partial",
        "schedules": {
            "delta": _power(0.01, -0.5),
            "epsilon": _power(2.0, 1.2),
            "gamma": {"kind": "derived-gamma", "variant": "partial", "b1": 5.0, "b2": 5.0},
            "sigma": _power(2.0, 5.0),
            "w": {"kind": "sum", "terms": [_const(500.0), _power(500.0, 10.0)]},
        },
        "integrator": {"method": "reparam_rk45", "horizon": 2.0, "h_max": 0.05, "sample_stride": 10},
        "initial": {"x": ROBOT_INITIAL_X},
        # strongly monotone game: the continuation can start at small delta
        "oracle": {"delta0": 1e-3},
        "published_equilibrium": ROBOT_PUBLISHED_EQUILIBRIUM,
    },
    "remark5b-full": {
        "name": "remark5b-full",
        "description": "Exponential schedules with derived gamma, full-decision dynamics",
        "game": {"builtin": "five-player"},
        "algorithm": "full",
        "schedules": _exponential_schedules("full"),
        "integrator": {"method": "reparam_rk45", "horizon": 2000.0, "h_max": 1.0, "sample_stride": 5},
        "initial": {"x": FIVE_PLAYER_INITIAL_X},
        "check_horizon": 50.0,
    },
    "remark5b-partial": {
        "name": "remark5b-partial",
        "description": "Exponential schedules with derived gamma and w = 60 sigma, partial-decision dynamics",
        "game": {"builtin": "five-player"},
        "graph": FIVE_PLAYER_GRAPH,
        "algorithm": "partial",
        "schedules": _exponential_schedules("partial"),
        "integrator": {"method": "reparam_rk45", "horizon": 400.0, "h_max": 1.0, "sample_stride": 50},
        "initial": {"x": FIVE_PLAYER_INITIAL_X},
        "check_horizon": 50.0,
    },
    "consensus-unconstrained": {
        "name": "consensus-unconstrained",
        "description": "Unconstrained consensus game, decaying regularization with constant consensus gain",
        "game": {"builtin": "consensus"},
        "graph": FIVE_PLAYER_GRAPH,
        "algorithm": "unconstrained",
        "schedules": {
            "delta": _power(1.0, -0.5),
            "epsilon": _const(0.0),
            "gamma": _const(1.0),
            "sigma": _const(1.0),
            "w": _const(300.0),
        },
        "integrator": {"method": "rk45", "horizon": 30.0, "h_max": 0.05, "sample_stride": 20},
        "initial": {"x": FIVE_PLAYER_INITIAL_X},
    },
}


def list_examples() -> list[dict[str, str]]:
    return [{"name": name, "description": doc["description"]} for name, doc in BUILTIN_EXPERIMENTS.items()]


def builtin_document(name: str) -> dict:
    """A deep copy of the raw builtin config, safe to modify."""
    try:
        return copy.deepcopy(BUILTIN_EXPERIMENTS[name])
    except KeyError:
        raise InvalidArgumentError(
            f"unknown builtin experiment '{name}'", available=sorted(BUILTIN_EXPERIMENTS)
        ) from None


def get_builtin(name: str) -> ExperimentConfig:
    logger.debug("Loading builtin experiment %s", name)
    return ExperimentConfig.model_validate(builtin_document(name))
