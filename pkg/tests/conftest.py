import math

import numpy as np
import pytest

from bidsolve.core import DiscreteNoise, ResetProblem, StateGrid


def random_instance(seed, n_x=None, k=None, n_u=None, n_w=None, gamma=None):
    """Small randomized reset-control instance with nonnegative costs.

    The reset cost is piecewise linear in |x - zeta| with its kink on a grid
    node, so interpolating it is exact and the usual upper bound holds.
    """
    rng = np.random.default_rng(seed)
    n_x = n_x or int(rng.integers(4, 17))
    k = k or int(rng.integers(1, 5))
    n_u = n_u or int(rng.integers(1, 6))
    n_w = n_w or int(rng.integers(1, 7))
    gamma = float(rng.uniform(0.5, 0.95)) if gamma is None else gamma

    x_max = float(rng.uniform(2.0, 10.0))
    grid = StateGrid(0.0, x_max, n_x)
    zeta = float(grid.points[rng.integers(0, n_x)])
    controls = np.sort(rng.choice(np.linspace(0.0, x_max / 2, 4 * n_u + 1), n_u, replace=False))
    probs = rng.dirichlet(np.ones(n_w))
    probs = probs / probs.sum()
    noise = DiscreteNoise(rng.uniform(0.0, x_max / 3, n_w), probs)

    rho = rng.uniform(0.3, 1.1)
    wiggle = rng.uniform(0.0, 1.0)
    a_u, a_sq, a_age, a_osc = rng.uniform(0.0, 2.0, 4)
    s_lin = rng.uniform(0.0, 3.0, k + 1)
    s_noise = rng.uniform(0.0, 0.5)

    def dynamics(x, t, u, w):
        return rho * x + u - w + wiggle * np.sin(x + t)

    def stage_cost(x, t, u, w):
        return (a_u * u + a_sq * (x + u - w) ** 2 / x_max
                + a_age * t * np.abs(x - zeta) + a_osc * np.abs(np.sin(x * u + w)))

    def reset_cost(x, t, w):
        return (s_lin[t] + s_noise * w) * np.abs(x - zeta)

    problem = ResetProblem(zeta, k, gamma, controls, dynamics, stage_cost, reset_cost)
    return problem, grid, noise


def brute_backward_pass(problem, grid, noise, v):
    """Scalar-loop evaluation of the trial-value recursion (no precomputation)."""
    x = grid.points
    k, gamma = problem.horizon_cap, problem.discount
    V = np.zeros((x.size, k + 1))

    def es(xv, t):
        return math.fsum(p * float(problem.reset_cost(xv, t, w)) for w, p in zip(noise.values, noise.probs))

    def q(xv, t, u, col):
        total = 0.0
        for w, p in zip(noise.values, noise.probs):
            nxt = float(problem.dynamics(xv, t, u, w))
            total += p * (float(problem.stage_cost(xv, t, u, w)) + gamma * float(np.interp(nxt, x, col)))
        return total

    for i, xv in enumerate(x):
        V[i, k] = v + es(xv, k)
    for t in range(k - 1, -1, -1):
        for i, xv in enumerate(x):
            cont = min(q(xv, t, u, V[:, t + 1]) for u in problem.control_grid)
            V[i, t] = min(v + es(xv, t), cont)
    ups = min(q(problem.reset_state, 0, u, V[:, 1]) for u in problem.control_grid)
    return V, ups


def brute_value_iteration(problem, grid, noise, sweeps):
    """Scalar-loop synchronous value iteration on the augmented MDP."""
    x = grid.points
    k, gamma = problem.horizon_cap, problem.discount
    J = np.zeros((x.size, k + 1))

    def q(xv, t, u, col):
        return sum(
            p * (float(problem.stage_cost(xv, t, u, w)) + gamma * float(np.interp(float(problem.dynamics(xv, t, u, w)), x, col)))
            for w, p in zip(noise.values, noise.probs)
        )

    for _ in range(sweeps):
        root = min(q(problem.reset_state, 0, u, J[:, 1]) for u in problem.control_grid)
        new = np.empty_like(J)
        for i, xv in enumerate(x):
            for t in range(k + 1):
                es = sum(p * float(problem.reset_cost(xv, t, w)) for w, p in zip(noise.values, noise.probs))
                reset = es + root
                if t == k:
                    new[i, t] = reset
                else:
                    new[i, t] = min(reset, min(q(xv, t, u, J[:, t + 1]) for u in problem.control_grid))
        J = new
    return J


@pytest.fixture(scope="session")
def tank_instance():
    from bidsolve.water import WaterParams, build_problem

    return build_problem(WaterParams())


@pytest.fixture(scope="session")
def tank_operators(tank_instance):
    from bidsolve.core import build_operators

    inst = tank_instance
    return build_operators(inst.problem, inst.grid, inst.noise)


@pytest.fixture(scope="session")
def tank_solve(tank_instance, tank_operators):
    from bidsolve.bids import solve

    inst = tank_instance
    return solve(inst.problem, inst.grid, inst.noise, 0.1, operators=tank_operators)


def quadrature_cdf(params, d_max, n=200_001):
    """CDF of the continuous demand part on [0, d_max] by cumulative Simpson.

    Returns (grid, cdf) with cdf(0) = 0 and cdf(d_max) ~ 1 - exp(-event_rate).
    """
    from scipy.integrate import cumulative_simpson

    from bidsolve.demand import pdf_continuous

    d = np.linspace(0.0, d_max, n)
    f = np.empty(n)
    # limit d -> 0+ keeps only the single-event term of the series
    f[0] = params.event_rate * params.duration_rate * math.exp(-params.event_rate)
    f[1:] = pdf_continuous(params, d[1:])
    return d, cumulative_simpson(f, x=d, initial=0.0)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
