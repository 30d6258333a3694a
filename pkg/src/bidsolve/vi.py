"""Value iteration on the augmented (state, age) MDP.

Serves as the correctness oracle for the bisection solver: the same grid,
interpolation and noise atoms, but solved as a functional fixed point by
synchronous Bellman sweeps.  Actions are ``(u, r)``; ``r = 0`` is infeasible
at age ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DiscreteNoise, ResetProblem, StageOperators, StateGrid, build_operators


class ConvergenceError(RuntimeError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass
class AugmentedMDP:
    problem: ResetProblem
    grid: StateGrid
    noise: DiscreteNoise
    operators: StageOperators

    @classmethod
    def from_problem(cls, problem, grid, noise, operators=None):
        if operators is None:
            operators = build_operators(problem, grid, noise)
        return cls(problem, grid, noise, operators)

    @property
    def horizon_cap(self) -> int:
        return self.problem.horizon_cap

    @property
    def discount(self) -> float:
        return self.problem.discount


@dataclass
class VIResult:
    """Converged table ``values[i, t]``; ``reset_value`` is J0 at (reset state, 0)."""

    values: np.ndarray
    iterations: int
    converged: bool
    reset_value: float
    residuals: list = field(default_factory=list)


def q_values(mdp: AugmentedMDP, J: np.ndarray):
    """Continuation Q-values per age, the post-reset Q-row and the reset branch.

    Returns ``(cont, root, reset)`` where ``cont[t]`` is ``(n_x, n_u)`` for
    ``t < k``, ``root`` is ``(n_u,)`` and ``reset[:, t]`` is the value of
    resetting at ``(x_i, t)``.
    """
    ops, gamma, k = mdp.operators, mdp.discount, mdp.horizon_cap
    root = ops.root_continuation(J[:, 1], gamma)
    reset = ops.reset_cost + root.min()
    cont = [ops.continuation(t, J[:, t + 1], gamma) for t in range(k)]
    return cont, root, reset


def bellman_backup(mdp: AugmentedMDP, J: np.ndarray) -> np.ndarray:
    """One synchronous application of the Bellman operator to ``J``."""
    cont, _, reset = q_values(mdp, J)
    out = np.empty_like(J)
    k = mdp.horizon_cap
    out[:, k] = reset[:, k]
    for t in range(k):
        out[:, t] = np.minimum(reset[:, t], cont[t].min(axis=1))
    return out


def stopping_threshold(tol: float, gamma: float) -> float:
    """Successive-difference level that certifies sup-distance <= tol."""
    if gamma == 0:
        return 0.0
    return tol * (1.0 - gamma) / (2.0 * gamma)


def solve_vi(mdp: AugmentedMDP, tol: float = 1e-6, max_iter: int = 100_000) -> VIResult:
    """Iterate from J = 0 until the certified sup-norm tolerance is met.

    Raises:
        ConvergenceError: ``max_iter`` sweeps without meeting the tolerance;
            the partial result is attached as ``.result``.
    """
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol!r}")
    threshold = stopping_threshold(tol, mdp.discount)
    J = np.zeros((mdp.operators.n_x, mdp.horizon_cap + 1))
    residuals = []
    for it in range(1, max_iter + 1):
        J_new = bellman_backup(mdp, J)
        diff = float(np.max(np.abs(J_new - J)))
        residuals.append(diff)
        J = J_new
        if diff <= threshold:
            return _finish(mdp, J, it, True, residuals)
    result = _finish(mdp, J, max_iter, False, residuals)
    raise ConvergenceError(
        f"value iteration did not converge in {max_iter} sweeps "
        f"(last difference {residuals[-1]:.3e}, need {threshold:.3e})",
        result,
    )


def _finish(mdp, J, iterations, converged, residuals):
    root = mdp.operators.root_continuation(J[:, 1], mdp.discount).min()
    return VIResult(J, iterations, converged, float(root), residuals)
