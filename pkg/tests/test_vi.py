import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bidsolve.core import DiscreteNoise, ResetProblem, StateGrid, expected_reset_cost, expected_stage_cost
from bidsolve.vi import AugmentedMDP, ConvergenceError, bellman_backup, solve_vi, stopping_threshold

from .conftest import brute_value_iteration, random_instance


def _mdp(prob, grid, noise):
    return AugmentedMDP.from_problem(prob, grid, noise)


def test_zero_problem_is_fixed():
    prob = ResetProblem(0.0, 2, 0.9, [0.0, 1.0], lambda x, t, u, w: x + u - w,
                        lambda x, t, u, w: 0 * (x + u + w), lambda x, t, w: 0 * (x + w))
    mdp = _mdp(prob, StateGrid(0, 2, 5), DiscreteNoise([0.0, 1.0], [0.5, 0.5]))
    assert np.all(bellman_backup(mdp, np.zeros((5, 3))) == 0)


@pytest.mark.parametrize("seed", range(4))
def test_backup_of_zero_is_myopic_cost(seed):
    prob, grid, noise = random_instance(seed)
    out = bellman_backup(_mdp(prob, grid, noise), np.zeros((grid.n_points, prob.horizon_cap + 1)))
    x, k = grid.points, prob.horizon_cap
    root = expected_stage_cost(prob, prob.reset_state, 0, prob.control_grid, noise).min()
    for t in range(k + 1):
        reset = expected_reset_cost(prob, x, t, noise) + root
        if t == k:
            expected = reset
        else:
            cont = expected_stage_cost(prob, x[:, None], t, prob.control_grid[None, :], noise).min(axis=1)
            expected = np.minimum(reset, cont)
        np.testing.assert_allclose(out[:, t], expected, rtol=1e-13, atol=1e-13)


def test_two_backups_by_hand():
    prob = ResetProblem(0.0, 2, 0.5, [1.0], lambda x, t, u, w: x + u - w,
                        lambda x, t, u, w: 1 + x + 0 * (u + w), lambda x, t, w: (t + 1) * x + 0 * w)
    grid = StateGrid(0.0, 2.0, 3)
    mdp = _mdp(prob, grid, DiscreteNoise([1.0], [1.0]))
    x = grid.points
    J1 = bellman_backup(mdp, np.zeros((3, 3)))
    np.testing.assert_allclose(J1, np.column_stack([1 + x, 1 + x, 1 + 3 * x]))
    J2 = bellman_backup(mdp, J1)
    np.testing.assert_allclose(J2, np.column_stack([x + 1.5, 2 * x + 1.5, 3 * x + 1.5]))


def test_gamma_zero_takes_two_sweeps():
    prob, grid, noise = random_instance(3, gamma=0.0)
    res = solve_vi(_mdp(prob, grid, noise), tol=1e-6)
    assert res.iterations == 2 and res.converged
    assert stopping_threshold(1e-6, 0.0) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_contraction_of_successive_differences(seed):
    prob, grid, noise = random_instance(seed)
    res = solve_vi(_mdp(prob, grid, noise), tol=1e-8)
    d = np.array(res.residuals)
    slack = 1e-12 * (1 + d[:-1])
    assert np.all(d[1:] <= prob.discount * d[:-1] + slack)
    assert np.all(np.diff(d) <= slack)


@pytest.mark.parametrize("seed", range(5))
def test_age_cap_row_is_reset_value_plus_expected_reset_cost(seed):
    prob, grid, noise = random_instance(seed)
    tol = 1e-6
    res = solve_vi(_mdp(prob, grid, noise), tol=tol)
    k = prob.horizon_cap
    es = expected_reset_cost(prob, grid.points, k, noise)
    assert np.max(np.abs(res.values[:, k] - res.reset_value - es)) <= 2 * tol
    i = grid.index_of(prob.reset_state)
    assert abs(res.values[i, 0] - res.reset_value) <= 2 * tol


@pytest.mark.parametrize("seed", range(3))
def test_matches_scalar_loop_iteration(seed):
    prob, grid, noise = random_instance(seed, n_x=6)
    mdp = _mdp(prob, grid, noise)
    J = np.zeros((6, prob.horizon_cap + 1))
    for _ in range(5):
        J = bellman_backup(mdp, J)
    np.testing.assert_allclose(J, brute_value_iteration(prob, grid, noise, 5), rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 50))
def test_backup_preserves_nonnegativity(seed, scale):
    prob, grid, noise = random_instance(seed)
    J = scale * np.random.default_rng(seed).random((grid.n_points, prob.horizon_cap + 1))
    assert np.all(bellman_backup(_mdp(prob, grid, noise), J) >= 0)


def test_nonconvergence_is_reported():
    prob, grid, noise = random_instance(1, gamma=0.95)
    with pytest.raises(ConvergenceError) as info:
        solve_vi(_mdp(prob, grid, noise), tol=1e-9, max_iter=3)
    assert info.value.result.iterations == 3 and not info.value.result.converged


def test_rejects_nonpositive_tolerance():
    prob, grid, noise = random_instance(1)
    with pytest.raises(ValueError):
        solve_vi(_mdp(prob, grid, noise), tol=0.0)
