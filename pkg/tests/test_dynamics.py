"""Tests for the right-hand sides, the integrators and the trajectory metrics."""

import math

import numpy as np
import pytest

from app.errors import IntegrationError, InvalidArgumentError
from app.services import graph
from app.services.dynamics import (
    CallableSystem,
    FullDecisionSystem,
    IntegratorConfig,
    PartialDecisionSystem,
    SwarmState,
    Trajectory,
    full_decision_rhs,
    integrate,
    metrics,
    partial_decision_rhs,
    unconstrained_rhs,
)
from app.services.game_model import GameModel, consensus
from app.services.oracle import solve_regularized_vi
from app.services.schedules import Constant, Exponential, Power, ScheduleSet, derive_gamma


def _constant_schedules(delta=0.1, epsilon=1.0, gamma=0.05, sigma=1.0, w=10.0) -> ScheduleSet:
    return ScheduleSet(
        delta=Constant(delta), epsilon=Constant(epsilon), gamma=Constant(gamma), sigma=Constant(sigma), w=Constant(w)
    )


def test_swarm_state_forces_diagonal_to_x():
    state = SwarmState(x=[1.0, 2.0], Y=np.zeros((2, 2)))
    np.testing.assert_array_equal(np.diag(state.Y), [1.0, 2.0])
    assert state.disagreement() == 2.0


def test_swarm_state_pack_unpack():
    state = SwarmState.with_estimates([1.0, 2.0, 3.0], off_diagonal=0.5)
    z = state.pack()
    assert z.size == 3 + 6
    back = SwarmState.unpack(z, 3, has_estimates=True)
    np.testing.assert_array_equal(back.Y, state.Y)


def test_swarm_state_rejects_wrong_estimate_shape():
    with pytest.raises(InvalidArgumentError):
        SwarmState(x=[1.0, 2.0], Y=np.zeros((3, 3)))


def test_full_decision_rhs_vanishes_at_unregularized_fixed_point(five_player):
    game, constraints = five_player
    s = _constant_schedules(delta=0.0, epsilon=1.0, gamma=0.1, sigma=2.0)
    np.testing.assert_allclose(full_decision_rhs(game, constraints, s, 0.0, np.full(5, -0.2)), 0.0, atol=1e-14)


def test_full_decision_rhs_points_into_the_box(five_player):
    game, constraints = five_player
    s = _constant_schedules(gamma=0.5)
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])  # every player on its upper bound
    rhs = full_decision_rhs(game, constraints, s, 0.0, x)
    assert np.all(rhs <= 0)


def test_partial_rhs_at_consensus_matches_full_decision(five_player, ring5, rng):
    game, constraints = five_player
    s = _constant_schedules()
    x = rng.uniform(-1.0, 1.0, size=5)
    out = partial_decision_rhs(game, constraints, s, ring5, 0.3, SwarmState.at_consensus(x))
    np.testing.assert_allclose(out.x, full_decision_rhs(game, constraints, s, 0.3, x), atol=1e-14)
    off = ~np.eye(5, dtype=bool)
    np.testing.assert_allclose(out.Y[off], 0.0, atol=1e-12)


def test_partial_rhs_reads_only_neighbour_rows(five_player, ring5, rng):
    game, constraints = five_player
    s = _constant_schedules()
    state = SwarmState(x=rng.uniform(-1.0, 1.0, size=5), Y=rng.uniform(-2.0, 2.0, size=(5, 5)))
    out = partial_decision_rhs(game, constraints, s, ring5, 0.7, state)
    for i in range(5):
        masked = state.Y.copy()
        others = [k for k in range(5) if k != i and k not in ring5.neighbors(i)]
        masked[others] = 0.0
        local = partial_decision_rhs(game, constraints, s, ring5, 0.7, SwarmState(x=state.x, Y=masked))
        assert local.x[i] == out.x[i]
        np.testing.assert_array_equal(local.Y[i], out.Y[i])


def test_partial_rhs_two_player_consensus_term():
    game = GameModel.quadratic(np.eye(2))
    state = SwarmState(x=[0.0, 0.0], Y=[[0.0, 1.0], [0.0, 0.0]])
    out = partial_decision_rhs(game, None, _constant_schedules(w=1.0), graph.complete(2), 0.0, state)
    # y_12 = 1 against y_22 = x_2 = 0
    assert out.Y[0, 1] == pytest.approx(-1.0)
    assert out.Y[1, 0] == pytest.approx(0.0)


def test_full_decision_rhs_is_small_at_the_regularized_solution(five_player):
    game, constraints = five_player
    s = _constant_schedules(delta=0.1, epsilon=1.0, gamma=0.05, sigma=2.0)
    tol = 1e-9
    x_t = solve_regularized_vi(game, constraints, 0.1, 1.0, tol=tol).x_star
    rhs = full_decision_rhs(game, constraints, s, 3.0, x_t)
    assert np.abs(rhs).max() <= 2.0 * tol


def test_partial_rhs_needs_estimates(five_player, ring5):
    game, constraints = five_player
    with pytest.raises(InvalidArgumentError):
        partial_decision_rhs(game, constraints, _constant_schedules(), ring5, 0.0, SwarmState(x=np.zeros(5)))


def test_partial_rhs_checks_graph_size(five_player):
    game, constraints = five_player
    state = SwarmState.with_estimates(np.zeros(5))
    with pytest.raises(InvalidArgumentError):
        partial_decision_rhs(game, constraints, _constant_schedules(), graph.ring(4), 0.0, state)


def test_unconstrained_rhs_consensus_flow(ring5):
    game = consensus(ring5)
    state = SwarmState.at_consensus(np.ones(5))
    out = unconstrained_rhs(game, Constant(0.5), Constant(10.0), ring5, 0.0, state)
    # consensus point: only the regularization acts
    np.testing.assert_allclose(out.x, -0.5)
    np.testing.assert_allclose(np.diag(out.Y), -0.5)


def test_rk4_is_fourth_order():
    system = CallableSystem(lambda t, y: -y, n_players=1)
    errors = []
    for h in (0.1, 0.05):
        traj = integrate(system, SwarmState(x=[1.0]), IntegratorConfig(method="rk4", horizon=1.0, h=h))
        assert traj.times[-1] == pytest.approx(1.0)
        errors.append(abs(traj.xs[-1][0] - math.exp(-1.0)))
    assert 12.0 <= errors[0] / errors[1] <= 20.0


def test_rk45_accuracy_and_stats():
    system = CallableSystem(lambda t, y: -y, n_players=2)
    cfg = IntegratorConfig(method="rk45", horizon=5.0, rtol=1e-8, atol=1e-10, h_max=0.5)
    traj = integrate(system, SwarmState(x=[1.0, -2.0]), cfg)
    np.testing.assert_allclose(traj.xs[-1], np.array([1.0, -2.0]) * math.exp(-5.0), atol=1e-7)
    assert traj.times[-1] == 5.0
    assert traj.stats.steps > 0
    assert traj.stats.rhs_evaluations == 6 * (traj.stats.steps + traj.stats.rejected)


def test_reparameterized_time_change():
    # y' = sigma (-y) with sigma = 2: in rescaled time dy/dtau = -y and t = tau / 2
    system = CallableSystem(lambda t, y: -2.0 * y, n_players=1, sigma_fn=lambda t: 2.0)
    cfg = IntegratorConfig(method="reparam_rk45", horizon=2.0, rtol=1e-9, atol=1e-12, h_max=0.1)
    traj = integrate(system, SwarmState(x=[1.0]), cfg)
    assert traj.times[-1] == pytest.approx(1.0, rel=1e-8)
    assert traj.xs[-1][0] == pytest.approx(math.exp(-2.0), rel=1e-6)


def test_rescaled_time_run_agrees_with_plain_rk45(five_player):
    game, constraints = five_player
    s = ScheduleSet(
        delta=Constant(0.1), epsilon=Constant(1.0), gamma=Constant(0.05), sigma=Power(1.0, 1.0), w=Constant(1.0)
    )
    system = FullDecisionSystem(game, constraints, s)
    x0 = SwarmState(x=[0.5, -1.0, 2.0, 0.0, 1.0])
    plain = integrate(system, x0, IntegratorConfig(method="rk45", horizon=2.0, rtol=1e-10, atol=1e-12, h_max=0.01))
    # sigma = 1 + t, so tau = t + t^2 / 2 reaches 4 at t = 2
    rescaled = integrate(
        system, x0, IntegratorConfig(method="reparam_rk45", horizon=4.0, rtol=1e-10, atol=1e-12, h_max=0.01)
    )
    assert rescaled.times[-1] == pytest.approx(2.0, abs=1e-8)
    np.testing.assert_allclose(rescaled.xs[-1], plain.xs[-1], atol=1e-5)


def test_step_size_underflow_raises_with_partial_trajectory():
    system = CallableSystem(lambda t, y: -1e8 * y, n_players=1)
    cfg = IntegratorConfig(method="rk45", horizon=1.0, h_min=1e-3, h_max=0.1)
    with pytest.raises(IntegrationError) as info:
        integrate(system, SwarmState(x=[1.0]), cfg)
    assert info.value.trajectory is not None
    assert len(info.value.trajectory) >= 1


def test_step_budget_raises():
    system = CallableSystem(lambda t, y: -y, n_players=1)
    cfg = IntegratorConfig(method="rk45", horizon=100.0, h_max=0.01, max_steps=10)
    with pytest.raises(IntegrationError):
        integrate(system, SwarmState(x=[1.0]), cfg)


def test_integrator_config_validation():
    with pytest.raises(InvalidArgumentError):
        IntegratorConfig(method="euler")
    with pytest.raises(InvalidArgumentError):
        IntegratorConfig(h_min=1.0, h_max=0.1)
    with pytest.raises(InvalidArgumentError):
        IntegratorConfig(horizon=0.0)


def test_sample_stride_keeps_first_and_last():
    system = CallableSystem(lambda t, y: -y, n_players=1)
    traj = integrate(system, SwarmState(x=[1.0]), IntegratorConfig(method="rk4", horizon=1.0, h=0.1, sample_stride=3))
    # steps 3, 6, 9 plus the initial and the final state
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(1.0)
    assert len(traj) == 5


def test_trajectory_records_error_and_violation(five_player):
    game, constraints = five_player
    s = _constant_schedules()
    traj = integrate(
        FullDecisionSystem(game, constraints, s),
        SwarmState(x=np.zeros(5)),
        IntegratorConfig(method="rk4", horizon=0.1, h=0.05),
        ref=np.full(5, -0.2),
    )
    assert traj.errs[0] == pytest.approx(0.2)
    assert traj.violations[0] == pytest.approx(1.0)


def test_integrate_adds_estimates_for_partial_system(five_player, ring5):
    game, constraints = five_player
    system = PartialDecisionSystem(game, constraints, _constant_schedules(), ring5)
    traj = integrate(system, SwarmState(x=np.zeros(5)), IntegratorConfig(method="rk4", horizon=0.05, h=0.01))
    assert traj.Ys[-1].shape == (5, 5)


def test_full_decision_run_stays_in_boxes(five_player):
    game, constraints = five_player
    delta, eps = Exponential(1.0, -0.1), Exponential(1.0, 0.3)
    s = ScheduleSet(
        delta=delta, epsilon=eps, gamma=derive_gamma(5, 3.5, 4.5, delta, eps), sigma=Constant(1.0)
    )
    traj = integrate(
        FullDecisionSystem(game, constraints, s),
        SwarmState(x=[1.0, -2.0, 3.0, 0.0, 0.0]),
        IntegratorConfig(method="rk45", horizon=5.0, h_max=0.1),
    )
    xs = np.array(traj.xs)
    assert np.all(xs >= constraints.lower - 1e-6)
    assert np.all(xs <= constraints.upper + 1e-6)


def _trajectory(errs):
    n = len(errs)
    return Trajectory(
        times=[float(k) for k in range(n)],
        xs=[np.array([e]) for e in errs],
        Ys=[None] * n,
        errs=list(errs),
        violations=[0.0] * n,
    )


def test_metrics_monotone_after_transient():
    m = metrics(_trajectory([1.0, 0.8, 0.4, 0.3, 0.3005, 0.1]))
    assert m.err_monotone_after_transient is True
    assert m.transient_cutoff == 2.0
    assert m.final_err == pytest.approx(0.1)


def test_metrics_detects_rebound():
    m = metrics(_trajectory([1.0, 0.4, 0.5, 0.1]))
    assert m.err_monotone_after_transient is False


def test_metrics_error_that_never_halves():
    m = metrics(_trajectory([1.0, 0.9, 0.8]))
    assert m.err_monotone_after_transient is False
    assert m.transient_cutoff is None


def test_metrics_without_reference():
    traj = _trajectory([1.0, 0.5])
    traj.errs = [None, None]
    m = metrics(traj)
    assert m.final_err is None and m.err_monotone_after_transient is None
