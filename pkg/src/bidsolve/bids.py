"""Binary Dynamic Search for reset-control problems.

For a trial value ``v`` of the cost-to-go at the reset state, one backward
pass over ages ``k, k-1, ..., 0`` yields a table ``V(x, t, v)`` and the
implied value ``upsilon(v)`` at the reset state.  ``upsilon`` is monotone
with slope at most ``discount``, so its unique fixed point is found by
bisection on ``[0, upper_bound]``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DiscreteNoise,
    PolicyTable,
    ResetProblem,
    StageOperators,
    StateGrid,
    ValueTable,
    build_operators,
    validate_problem,
)

log = logging.getLogger(__name__)

TIE_RTOL = 1e-9


class InadmissibleProblemError(ValueError):
    pass


class BracketError(RuntimeError):
    """upsilon behaved non-monotonically, so the bisection bracket is unsound."""


@dataclass
class Bracket:
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return (self.upper + self.lower) / 2.0


@dataclass
class SolveReport:
    v_star: float
    value_table: ValueTable
    policy: PolicyTable
    iterations: int
    bracket_history: list = field(default_factory=list)
    epsilon: float = 0.1
    wall_time: float = 0.0
    upper_bound: float = 0.0
    bracket: Bracket | None = None
    upsilon_star: float = 0.0

    @property
    def iteration_bound(self) -> int:
        return iteration_bound(self.upper_bound, self.epsilon)


def iteration_bound(upper: float, epsilon: float) -> int:
    """Bisection steps allowed on ``[0, upper]``: ceil(log2(upper/eps)) + 1."""
    if upper <= epsilon:
        return 1
    return math.ceil(math.log2(upper / epsilon)) + 1


def _ensure_admissible(problem, grid, noise):
    report = validate_problem(problem, grid, noise)
    if report:
        raise InadmissibleProblemError("; ".join(report))


def upper_bound(problem: ResetProblem, grid: StateGrid, noise: DiscreteNoise) -> float:
    """Cost of 'act once, then always reset at age 1', as a geometric series.

    ``min_u E[g(z, 0, u, w0) + discount * s(h(z, 0, u, w0), 1, w1)] / (1 - discount)``
    with independent atoms ``w0``, ``w1``.
    """
    gamma = problem.discount
    zeta = np.float64(problem.reset_state)
    w, p = noise.values, noise.probs
    ctrl = problem.control_grid
    n_u, n_w = ctrl.size, w.size
    g = np.broadcast_to(problem.stage_cost(zeta, 0, ctrl[:, None], w[None, :]), (n_u, n_w)) @ p
    nxt = np.broadcast_to(problem.dynamics(zeta, 0, ctrl[:, None], w[None, :]), (n_u, n_w))
    es = np.empty(n_u)
    for j in range(n_u):
        s = np.broadcast_to(problem.reset_cost(nxt[j][:, None], 1, w[None, :]), (n_w, n_w))
        es[j] = p @ (s @ p)
    return float(np.min(g + gamma * es) / (1.0 - gamma))


def backward_pass(
    problem: ResetProblem,
    grid: StateGrid,
    noise: DiscreteNoise,
    v: float,
    operators: StageOperators | None = None,
) -> tuple[ValueTable, float]:
    """Evaluate ``V(., ., v)`` for every age and return it with ``upsilon(v)``."""
    if v < 0:
        raise ValueError(f"trial value must be >= 0, got {v!r}")
    ops = operators if operators is not None else build_operators(problem, grid, noise)
    gamma = problem.discount
    k = problem.horizon_cap
    values = np.empty((ops.n_x, k + 1))
    values[:, k] = v + ops.reset_cost[:, k]
    for t in range(k - 1, -1, -1):
        cont = ops.continuation(t, values[:, t + 1], gamma).min(axis=1)
        values[:, t] = np.minimum(v + ops.reset_cost[:, t], cont)
    upsilon = float(ops.root_continuation(values[:, 1], gamma).min())
    return ValueTable(values, float(v)), upsilon


def solve(
    problem: ResetProblem,
    grid: StateGrid,
    noise: DiscreteNoise,
    epsilon: float = 0.1,
    operators: StageOperators | None = None,
    validate: bool = True,
) -> SolveReport:
    """Bisect on the reset-state value until the bracket is narrower than ``epsilon``.

    If ``upsilon(v) > v`` the fixed point lies above ``v`` and the lower end
    moves up; if ``upsilon(v) < v`` the upper end moves down; an exact hit
    stops immediately.

    Raises:
        ValueError: ``epsilon <= 0``.
        InadmissibleProblemError: the instance fails ``validate_problem``.
        BracketError: upsilon turned out non-monotone, or the initial upper
            bound does not bracket the fixed point on this discretization.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    start = time.perf_counter()
    if validate:
        _ensure_admissible(problem, grid, noise)
    ops = operators if operators is not None else build_operators(problem, grid, noise)

    v_hi0 = upper_bound(problem, grid, noise)
    _, ups_hi = backward_pass(problem, grid, noise, v_hi0, ops)
    if ups_hi > v_hi0 * (1 + TIE_RTOL) + TIE_RTOL:
        raise BracketError(
            f"upsilon({v_hi0!r}) = {ups_hi!r} exceeds the initial upper bound; "
            "the reset cost interpolates above its pointwise values on this grid"
        )

    bracket = Bracket(0.0, v_hi0)
    history = []
    iterations = 0
    while True:
        v = bracket.midpoint
        _, ups = backward_pass(problem, grid, noise, v, ops)
        iterations += 1
        _check_monotone(history, v, ups)
        history.append((v, ups))
        log.debug("iter %d: v=%.10g upsilon=%.10g", iterations, v, ups)
        if ups > v:
            bracket.lower = v
        elif ups < v:
            bracket.upper = v
        else:
            bracket = Bracket(v, v)
            break
        if bracket.width <= epsilon:
            break

    v_star = bracket.midpoint
    table, ups_star = backward_pass(problem, grid, noise, v_star, ops)
    policy = extract_policy(problem, grid, noise, table, ops)
    return SolveReport(
        v_star=v_star,
        value_table=table,
        policy=policy,
        iterations=iterations,
        bracket_history=history,
        epsilon=epsilon,
        wall_time=time.perf_counter() - start,
        upper_bound=v_hi0,
        bracket=bracket,
        upsilon_star=ups_star,
    )


def _check_monotone(history, v, ups):
    for v_old, ups_old in history:
        lo, hi = (v_old, ups_old), (v, ups)
        if v < v_old:
            lo, hi = hi, lo
        slack = TIE_RTOL * (1 + abs(hi[1]))
        if lo[1] > hi[1] + slack:
            raise BracketError(
                f"upsilon not monotone: upsilon({lo[0]!r})={lo[1]!r} > "
                f"upsilon({hi[0]!r})={hi[1]!r}; check the problem evaluators"
            )


def _first_min(values: np.ndarray, axis: int = -1):
    """Minimum and the first index within the tie tolerance of it."""
    best = values.min(axis=axis)
    tol = TIE_RTOL * (1 + np.abs(best))
    idx = np.argmax(values <= np.expand_dims(best + tol, axis), axis=axis)
    return best, idx


def extract_policy(
    problem: ResetProblem,
    grid: StateGrid,
    noise: DiscreteNoise,
    table: ValueTable,
    operators: StageOperators | None = None,
) -> PolicyTable:
    """Greedy (reset, control) table from ``V(., ., v*)``.

    Resetting must beat continuing by more than the tie tolerance; among
    controls the smallest minimizer wins.  After a reset (and at the
    reset state with age 0) the control solves the post-reset problem.
    """
    ops = operators if operators is not None else build_operators(problem, grid, noise)
    gamma = problem.discount
    k = problem.horizon_cap
    v = table.v
    ctrl = problem.control_grid
    values = table.values

    _, root_idx = _first_min(ops.root_continuation(values[:, 1], gamma))
    root_u = ctrl[root_idx]

    reset = np.zeros((ops.n_x, k + 1), dtype=np.int8)
    control = np.empty((ops.n_x, k + 1))
    reset[:, k] = 1
    control[:, k] = root_u
    for t in range(k):
        best, idx = _first_min(ops.continuation(t, values[:, t + 1], gamma), axis=1)
        do_reset = v + ops.reset_cost[:, t] < best - TIE_RTOL * (1 + np.abs(best))
        reset[:, t] = do_reset
        control[:, t] = np.where(do_reset, root_u, ctrl[idx])

    i_zeta = grid.index_of(problem.reset_state)
    if i_zeta is not None:
        reset[i_zeta, 0] = 0
        control[i_zeta, 0] = root_u
    return PolicyTable(reset, control)
