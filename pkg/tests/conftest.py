"""Shared pytest fixtures.

Games, graphs and configs used across the suites. Everything random goes
through a seeded numpy generator so the suites stay deterministic; file
output always lands in pytest's tmp_path.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from app.services import game_model, graph

B1_FIVE = math.sqrt(12.0)
B2_FIVE = 2.0 * math.sqrt(5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def five_player():
    """(game, constraints) with the shared constraint sum(x) <= -1."""
    return game_model.five_player(shared=True)


@pytest.fixture
def five_player_noshared():
    return game_model.five_player(shared=False)


@pytest.fixture
def ring5():
    return graph.ring(5)


def exponential_schedule_doc(variant: str = "full") -> dict:
    """Exponential family with a = 0.1, b = 0.3 for the five-player game."""
    return {
        "delta": {"kind": "exp", "c": B1_FIVE, "r": -0.1},
        "epsilon": {"kind": "exp", "c": B1_FIVE / B2_FIVE, "r": 0.3},
        "gamma": {"kind": "derived-gamma", "variant": variant},
        "sigma": {"kind": "exp", "c": 1.0, "r": 1.6},
        "w": {"kind": "exp", "c": 60.0, "r": 1.6},
    }


@pytest.fixture
def small_config_doc() -> dict:
    """A full-decision run that integrates in well under a second."""
    return {
        "name": "small-full",
        "game": {"builtin": "five-player"},
        "algorithm": "full",
        "schedules": exponential_schedule_doc("full"),
        "integrator": {"method": "reparam_rk45", "horizon": 50.0, "h_max": 1.0},
        "initial": {"x": [3.0, 0.0, 2.0, 0.0, 0.0]},
        "reference": [-0.2] * 5,
        "check_horizon": 50.0,
    }


@pytest.fixture
def small_config_path(tmp_path, small_config_doc):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_config_doc), encoding="utf-8")
    return path
