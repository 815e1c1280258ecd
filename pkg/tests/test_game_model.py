"""Tests for games, constraint sets and the builtin example games."""

import math

import numpy as np
import pytest

from app.errors import InfeasibleConstraintsError, InvalidArgumentError, UnsupportedOperationError
from app.services import game_model, graph
from app.services.game_model import ConstraintSet, GameModel, LipschitzEstimates
from app.services.penalty_projection import penalty_gradient


def test_five_player_pseudo_gradient_vanishes_on_consensus(five_player):
    game, _ = five_player
    np.testing.assert_allclose(game_model.pseudo_gradient(game, np.full(5, -0.2)), 0.0, atol=1e-15)


def test_five_player_pseudo_gradient_at_initial_state(five_player):
    game, _ = five_player
    x = np.array([3.0, 0.0, 2.0, 0.0, 0.0])
    np.testing.assert_allclose(game_model.pseudo_gradient(game, x), [6.0, -5.0, 2.0, 0.0, -3.0])


def test_player_gradients_at_consensus_match_pseudo_gradient(five_player, rng):
    game, _ = five_player
    x = rng.normal(size=5)
    np.testing.assert_allclose(game_model.player_gradients(game, np.tile(x, (5, 1))), game_model.pseudo_gradient(game, x))


def test_player_gradients_use_each_players_own_row(five_player):
    game, _ = five_player
    Y = np.zeros((5, 5))
    Y[1] = [1.0, 0.0, 0.0, 0.0, 0.0]  # player 2 believes x_1 = 1
    out = game_model.player_gradients(game, Y)
    assert out[1] == pytest.approx(-1.0)
    assert out[0] == pytest.approx(0.0)


def test_five_player_is_monotone_but_not_strongly(five_player):
    game, _ = five_player
    report = game_model.check_monotone(game.M)
    assert report.monotone
    assert not report.strongly_monotone


def test_identity_is_strongly_monotone():
    report = game_model.check_monotone(np.eye(3))
    assert report.strongly_monotone
    assert report.min_sym_eigenvalue == pytest.approx(1.0)


def test_indefinite_matrix_is_not_monotone():
    assert not game_model.check_monotone([[1.0, 0.0], [0.0, -1.0]]).monotone


def test_skew_part_does_not_affect_monotonicity():
    report = game_model.check_monotone([[0.0, 5.0], [-5.0, 0.0]])
    assert report.monotone and not report.strongly_monotone


def test_monotonicity_report_agrees_with_random_pairs(rng):
    matrices = [game_model.five_player()[0].M, np.array([[1.0, 3.0], [0.0, -0.5]])]
    for _ in range(4):
        R = rng.normal(size=(4, 4))
        matrices.append(R @ R.T + rng.normal(size=(4, 4)) - rng.normal(size=(4, 4)).T - 0.5 * np.eye(4))
    for M in matrices:
        n = M.shape[0]
        report = game_model.check_monotone(M)
        game = GameModel.quadratic(M, rng.normal(size=n))
        x = rng.normal(scale=3.0, size=(1000, n))
        y = rng.normal(scale=3.0, size=(1000, n))
        fx = np.array([game_model.pseudo_gradient(game, v) for v in x])
        fy = np.array([game_model.pseudo_gradient(game, v) for v in y])
        # F(x) - F(y) = M (x - y)
        np.testing.assert_allclose(fx - fy, (x - y) @ M.T, atol=1e-10)
        inner = np.einsum("ij,ij->i", fx - fy, x - y)
        sq = np.einsum("ij,ij->i", x - y, x - y)
        assert np.all(inner >= (report.min_sym_eigenvalue - 1e-9) * sq)
        if report.monotone:
            assert report.min_sym_eigenvalue >= -1e-9 * np.linalg.norm(M)
        else:
            w, V = np.linalg.eigh(0.5 * (M + M.T))
            d = V[:, 0]
            gap = game_model.pseudo_gradient(game, d) - game_model.pseudo_gradient(game, np.zeros(n))
            assert gap @ d == pytest.approx(w[0]) and w[0] < 0


def test_lipschitz_bounds_hold_on_random_pairs(five_player, rng):
    game, constraints = five_player
    est = game_model.lipschitz_bounds(game, constraints)
    x = rng.normal(scale=3.0, size=(1000, 5))
    y = rng.normal(scale=3.0, size=(1000, 5))
    dist = np.linalg.norm(x - y, axis=1)
    df = np.array([game_model.pseudo_gradient(game, u) - game_model.pseudo_gradient(game, v) for u, v in zip(x, y)])
    dp = np.array([penalty_gradient(constraints, u) - penalty_gradient(constraints, v) for u, v in zip(x, y)])
    # per-player bounds on each component
    assert np.all(np.abs(df).max(axis=1) <= est.b1 * dist + 1e-12)
    assert np.all(np.abs(dp).max(axis=1) <= est.b2 * dist + 1e-12)


def test_lipschitz_bounds_five_player(five_player):
    est = game_model.lipschitz_bounds(*five_player)
    assert est.b1 == pytest.approx(math.sqrt(12.0))
    assert est.b2 == pytest.approx(2.0 * math.sqrt(5.0))
    assert est.b3 == est.b1


def test_lipschitz_bounds_without_shared_constraint_fall_back_to_one(five_player_noshared):
    assert game_model.lipschitz_bounds(*five_player_noshared).b2 == 1.0


def test_callback_game_matches_quadratic(five_player):
    game, _ = five_player
    callback = GameModel.from_callback(5, lambda i, y: float(game.M[i] @ y))
    x = np.array([0.5, -1.0, 0.25, 2.0, 0.0])
    np.testing.assert_allclose(game_model.pseudo_gradient(callback, x), game_model.pseudo_gradient(game, x))


def test_callback_game_has_no_affine_form():
    callback = GameModel.from_callback(2, lambda i, y: float(y[i]))
    with pytest.raises(UnsupportedOperationError):
        game_model.affine_form(callback)
    with pytest.raises(UnsupportedOperationError):
        game_model.lipschitz_bounds(callback)


def test_callback_game_uses_supplied_estimates():
    est = LipschitzEstimates(b1=2.0, b2=3.0, b3=4.0)
    callback = GameModel.from_callback(2, lambda i, y: float(y[i]), lipschitz=est)
    assert game_model.lipschitz_bounds(callback).b3 == 4.0


def test_game_arrays_are_read_only(five_player):
    game, _ = five_player
    with pytest.raises(ValueError):
        game.M[0, 0] = 1.0


def test_game_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        GameModel(n_players=2, M=np.eye(3))
    with pytest.raises(InvalidArgumentError):
        game_model.pseudo_gradient(GameModel.quadratic(np.eye(2)), [1.0, 2.0, 3.0])


def test_constraint_set_finds_slater_point(five_player):
    _, constraints = five_player
    assert constraints.has_shared
    assert constraints.g(constraints.slater_point).max() < 0
    assert np.all(constraints.slater_point >= constraints.lower)
    assert np.all(constraints.slater_point <= constraints.upper)


def test_infeasible_shared_constraint_is_rejected():
    with pytest.raises(InfeasibleConstraintsError):
        ConstraintSet.from_boxes([(0.0, 1.0), (0.0, 1.0)], A=[[1.0, 1.0]], b=[-1.0])


def test_empty_box_is_rejected():
    with pytest.raises(InvalidArgumentError):
        ConstraintSet.from_boxes([(1.0, 0.0)])


def test_violation(five_player):
    _, constraints = five_player
    assert constraints.violation(np.zeros(5)) == pytest.approx(1.0)
    assert constraints.violation(np.full(5, -0.5)) == 0.0
    assert constraints.box_violation(np.full(5, -0.5)) == 0.0
    assert constraints.box_violation([0.0, 0.0, 0.0, 0.0, -6.5]) == pytest.approx(1.5)
    assert constraints.box_violation([1.25, 0.0, 0.0, 0.0, 0.0]) == pytest.approx(0.25)


def test_robot_swarm_structure():
    g = graph.ring(8)
    game, constraints = game_model.robot_swarm([0.2, 0.2, 0.2, 0.0, 0.0, 0.6, 0.6, 0.6], g)
    assert game.M[0, 0] == pytest.approx(2 * 0.2 + 2 * 0.8 * 2)
    assert game.M[0, 1] == pytest.approx(-1.6)
    assert game.M[0, 2] == 0.0
    np.testing.assert_allclose(game.m[:3], [-0.4, -0.8, -1.2])
    assert constraints.A.shape == (16, 8)
    np.testing.assert_allclose(constraints.lower, 0.0)
    np.testing.assert_allclose(constraints.upper, 10.0)
    assert game_model.check_monotone(game.M).strongly_monotone


def test_robot_swarm_edge_rows_bound_neighbour_distance():
    game, constraints = game_model.robot_swarm([0.5, 0.5, 0.5], graph.path(3))
    assert constraints.violation([1.0, 2.0, 3.0]) == 0.0
    assert constraints.violation([1.0, 2.5, 3.0]) == pytest.approx(0.5)


def test_robot_swarm_coefficient_checks():
    with pytest.raises(InvalidArgumentError):
        game_model.robot_swarm([0.5, 0.5], graph.path(3))
    with pytest.raises(InvalidArgumentError):
        game_model.robot_swarm([0.5, 1.5, 0.5], graph.path(3))


def test_consensus_game_is_twice_the_laplacian(ring5):
    game = game_model.consensus(ring5)
    np.testing.assert_allclose(game.M, 2.0 * graph.laplacian(ring5))
    report = game_model.check_monotone(game.M)
    assert report.monotone and not report.strongly_monotone
