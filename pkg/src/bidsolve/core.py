"""Reset-control problem definition and the discretization primitives.

A reset-control problem is a discounted stochastic control problem where a
binary action returns the system to one known state and the number of stages
since the last reset may never exceed a cap ``k``.  Everything here is shared
by the binary-search solver and the value-iteration baseline: the problem
contract, the uniform state grid, the finite-support noise, linear
interpolation of value tables and the precomputed expectation operators.

Evaluators are numpy callables that broadcast over their array arguments::

    dynamics(x, t, u, w)   -> next state
    stage_cost(x, t, u, w) -> cost >= 0
    reset_cost(x, t, w)    -> cost >= 0

``t`` is always a Python ``int``.  States, controls and disturbances are
scalars (one-dimensional problems only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse

Evaluator = Callable[..., np.ndarray]

# rows of (x-chunk x controls x atoms) evaluated at once; bounds peak memory
_CHUNK_ELEMENTS = 2_000_000


class NonFiniteCostError(ValueError):
    """A problem evaluator returned NaN or inf."""


@dataclass(frozen=True)
class ResetProblem:
    """One instance of the reset-control problem.

    Attributes:
        reset_state: State the system jumps to on reset.
        horizon_cap: Maximum number of stages between resets (k >= 1).
        discount: Discount factor in [0, 1).
        control_grid: Ascending admissible control values.
        dynamics: ``h(x, t, u, w)``.
        stage_cost: ``g(x, t, u, w)``.
        reset_cost: ``s(x, t, w)``; must vanish at ``reset_state``.
    """

    reset_state: float
    horizon_cap: int
    discount: float
    control_grid: np.ndarray
    dynamics: Evaluator
    stage_cost: Evaluator
    reset_cost: Evaluator

    def __post_init__(self):
        object.__setattr__(
            self, "control_grid", np.asarray(self.control_grid, dtype=float)
        )

    @property
    def n_controls(self) -> int:
        return len(self.control_grid)


@dataclass(frozen=True)
class ResetTransition:
    """Post-decision pseudo-state ``(xi, tau)`` entering dynamics and cost."""

    pre_state: float
    pre_age: int


def reset_transition(problem: ResetProblem, x: float, t: int, r: int) -> ResetTransition:
    if r not in (0, 1):
        raise ValueError(f"reset flag must be 0 or 1, got {r!r}")
    if r:
        return ResetTransition(problem.reset_state, 0)
    return ResetTransition(x, t)


@dataclass(frozen=True)
class StateGrid:
    lower: float
    upper: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("state grid needs at least 2 points")
        if not self.upper > self.lower:
            raise ValueError("state grid upper bound must exceed lower bound")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n_points)

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n_points - 1)

    def nearest_index(self, x):
        """Index of the nearest grid point (x clamped to the grid)."""
        pos = (np.clip(x, self.lower, self.upper) - self.lower) / self.spacing
        return np.clip(np.rint(pos).astype(int), 0, self.n_points - 1)

    def index_of(self, x: float) -> int | None:
        """Index of a grid point equal to ``x``, or None."""
        hits = np.flatnonzero(self.points == x)
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class DiscreteNoise:
    """Finite-support disturbance: atom values and their probabilities."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if values.shape != probs.shape or values.size == 0:
            raise ValueError("noise needs matching, nonempty values and probs")
        if np.any(probs < 0):
            raise ValueError("noise probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"noise probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.values.size

    def mean(self) -> float:
        return float(self.probs @ self.values)


@dataclass
class ValueTable:
    """``values[i, t]`` for grid index i and stage-age t in 0..k, built at ``v``."""

    values: np.ndarray
    v: float

    @property
    def horizon_cap(self) -> int:
        return self.values.shape[1] - 1


@dataclass
class PolicyTable:
    """Per (grid index, age): reset flag and control value."""

    reset: np.ndarray
    control: np.ndarray

    @property
    def horizon_cap(self) -> int:
        return self.reset.shape[1] - 1

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return np.array_equal(self.reset, other.reset) and np.array_equal(
            self.control, other.control
        )


def _x_chunks(n_x: int, per_row: int):
    step = max(1, _CHUNK_ELEMENTS // max(per_row, 1))
    for start in range(0, n_x, step):
        yield slice(start, min(start + step, n_x))


def validate_problem(problem: ResetProblem, grid: StateGrid, noise: DiscreteNoise) -> list[str]:
    """Return every violated structural condition; empty means admissible."""
    report = []
    gamma = problem.discount
    if not 0.0 <= gamma < 1.0:
        report.append(f"discount out of range: {gamma!r} not in [0, 1)")
    if int(problem.horizon_cap) != problem.horizon_cap or problem.horizon_cap < 1:
        report.append(f"horizon cap must be an integer >= 1, got {problem.horizon_cap!r}")
        return report
    ctrl = problem.control_grid
    if ctrl.size == 0:
        report.append("control grid is empty")
        return report
    if np.any(np.diff(ctrl) <= 0):
        report.append("control grid is not strictly ascending")
    zeta = problem.reset_state
    if not grid.lower <= zeta <= grid.upper:
        report.append(f"reset state {zeta!r} lies outside the state grid")

    k = problem.horizon_cap
    x = grid.points
    w = noise.values
    with np.errstate(all="ignore"):
        for t in range(k + 1):
            s_zeta = np.broadcast_to(problem.reset_cost(np.float64(zeta), t, w), w.shape)
            if np.any(s_zeta != 0):
                report.append(f"s(zeta) != 0 at t={t}")
            s = np.broadcast_to(problem.reset_cost(x[:, None], t, w[None, :]), (x.size, w.size))
            if not np.all(np.isfinite(s)):
                report.append(f"reset cost non-finite at t={t}")
            elif np.any(s < 0):
                report.append(f"reset cost negative at t={t}")
        shape_tail = ctrl.size * w.size
        for t in range(k):
            bad_neg = bad_inf = False
            for sl in _x_chunks(x.size, shape_tail):
                g = problem.stage_cost(
                    x[sl, None, None], t, ctrl[None, :, None], w[None, None, :]
                )
                finite = np.isfinite(g)
                bad_inf |= not np.all(finite)
                bad_neg |= bool(np.any(g[finite] < 0))
            if bad_inf:
                report.append(f"stage cost non-finite at t={t}")
            if bad_neg:
                report.append(f"stage cost negative at t={t}")
    return report


def expected_stage_cost(problem: ResetProblem, xi, tau: int, u, noise: DiscreteNoise):
    """E over the noise atoms of ``g(xi, tau, u, w)``; broadcasts over xi and u."""
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    g = problem.stage_cost(xi[..., None], tau, u[..., None], noise.values)
    g = np.broadcast_to(g, np.broadcast_shapes(xi.shape, u.shape) + (len(noise),))
    out = g @ noise.probs
    return float(out) if out.ndim == 0 else out


def expected_reset_cost(problem: ResetProblem, x, t: int, noise: DiscreteNoise):
    """E over the noise atoms of ``s(x, t, w)``; broadcasts over x."""
    x = np.asarray(x, dtype=float)
    s = np.broadcast_to(problem.reset_cost(x[..., None], t, noise.values), x.shape + (len(noise),))
    out = s @ noise.probs
    return float(out) if out.ndim == 0 else out


def interpolate_value(table: ValueTable, grid: StateGrid, x, t: int):
    """Piecewise-linear value at stage ``t``; x is clamped to the grid bounds."""
    if not 0 <= t <= table.horizon_cap:
        raise IndexError(f"age {t} outside 0..{table.horizon_cap}")
    out = np.interp(x, grid.points, table.values[:, t])
    return float(out) if np.ndim(out) == 0 else out


def interpolation_weights(points: np.ndarray, x: np.ndarray):
    """Left neighbour index and right weight for linear interpolation.

    ``x`` is clamped to ``[points[0], points[-1]]``; a node maps to weight 0
    on itself (the last node maps to weight 1 on its left neighbour's right).
    """
    xc = np.clip(x, points[0], points[-1])
    lo = np.searchsorted(points, xc, side="right") - 1
    lo = np.clip(lo, 0, points.size - 2)
    x0 = points[lo]
    alpha = (xc - x0) / (points[lo + 1] - x0)
    return lo, alpha


@dataclass
class StageOperators:
    """Value-independent pieces of one Bellman stage, computed once per solve.

    For each age t < k, ``stage_cost[t][i, j]`` is E[g(x_i, t, u_j, w)] and
    ``transition[t]`` maps a value column at age t+1 to
    E[V(h(x_i, t, u_j, w))] in row ``i * n_u + j``.  ``root_*`` hold the same
    quantities at (reset_state, 0), and ``reset_cost[:, t]`` is E[s(x_i, t, w)].
    """

    stage_cost: list
    transition: list
    reset_cost: np.ndarray
    root_cost: np.ndarray
    root_transition: sparse.csr_matrix
    n_x: int
    n_u: int

    def continuation(self, t: int, next_values: np.ndarray, gamma: float) -> np.ndarray:
        """Q-values ``(n_x, n_u)`` at age t given the value column at age t+1."""
        ev = self.transition[t] @ next_values
        return self.stage_cost[t] + gamma * ev.reshape(self.n_x, self.n_u)

    def root_continuation(self, next_values: np.ndarray, gamma: float) -> np.ndarray:
        return self.root_cost + gamma * (self.root_transition @ next_values)


def _check_finite(arr, what, t, **axes):
    """Raise naming the first offending coordinates; ``axes`` label arr's dims."""
    if np.all(np.isfinite(arr)):
        return
    pos = np.argwhere(~np.isfinite(arr))[0]
    where = ", ".join(f"{name}={float(vals[i])!r}" for (name, vals), i in zip(axes.items(), pos))
    raise NonFiniteCostError(f"non-finite {what} at t={t}: {where}")


def _transition_rows(points, nxt, probs):
    """Expected-interpolation rows for next states ``nxt`` of shape (rows, atoms)."""
    n_rows, n_x = nxt.shape[0], points.size
    lo, alpha = interpolation_weights(points, nxt)
    base = (np.arange(n_rows) * n_x)[:, None]
    idx = np.concatenate([(base + lo).ravel(), (base + lo + 1).ravel()])
    wts = np.concatenate([(probs * (1.0 - alpha)).ravel(), (probs * alpha).ravel()])
    dense = np.bincount(idx, weights=wts, minlength=n_rows * n_x).reshape(n_rows, n_x)
    return sparse.csr_matrix(dense)


def build_operators(problem: ResetProblem, grid: StateGrid, noise: DiscreteNoise) -> StageOperators:
    """Precompute expected costs and interpolation operators for every stage.

    Stages whose dynamics produce identical next states share one transition
    matrix.

    Raises:
        NonFiniteCostError: an evaluator returned NaN/inf; the message names
            the grid point, age, control and atom.
    """
    k = problem.horizon_cap
    x = grid.points
    ctrl = problem.control_grid
    w, p = noise.values, noise.probs
    n_x, n_u, n_w = x.size, ctrl.size, w.size

    reset_cost = np.empty((n_x, k + 1))
    for t in range(k + 1):
        s = np.broadcast_to(problem.reset_cost(x[:, None], t, w[None, :]), (n_x, n_w))
        _check_finite(s, "reset cost", t, x=x, atom=w)
        reset_cost[:, t] = s @ p

    stage_cost = [np.empty((n_x, n_u)) for _ in range(k)]
    blocks = [[] for _ in range(k)]
    for sl in _x_chunks(n_x, n_u * n_w):
        xs = x[sl, None, None]
        shape = (xs.shape[0], n_u, n_w)
        seen = []
        for t in range(k):
            g = np.broadcast_to(problem.stage_cost(xs, t, ctrl[None, :, None], w[None, None, :]), shape)
            _check_finite(g, "stage cost", t, x=x[sl], u=ctrl, atom=w)
            stage_cost[t][sl] = g @ p
            nxt = np.broadcast_to(problem.dynamics(xs, t, ctrl[None, :, None], w[None, None, :]), shape)
            _check_finite(nxt, "next state", t, x=x[sl], u=ctrl, atom=w)
            nxt = nxt.reshape(-1, n_w)
            block = next((b for prev, b in seen if np.array_equal(prev, nxt)), None)
            if block is None:
                block = _transition_rows(x, nxt, p)
                seen.append((nxt, block))
            blocks[t].append(block)
    transition = []
    for t in range(k):
        same = next(
            (s for s in range(t) if all(a is b for a, b in zip(blocks[s], blocks[t]))),
            None,
        )
        if same is None:
            transition.append(sparse.vstack(blocks[t], format="csr"))
        else:
            transition.append(transition[same])
    del blocks

    zeta = np.float64(problem.reset_state)
    g0 = np.broadcast_to(problem.stage_cost(zeta, 0, ctrl[:, None], w[None, :]), (n_u, n_w))
    _check_finite(g0, "stage cost", 0, u=ctrl, atom=w)
    h0 = np.broadcast_to(problem.dynamics(zeta, 0, ctrl[:, None], w[None, :]), (n_u, n_w))
    _check_finite(h0, "next state", 0, u=ctrl, atom=w)
    return StageOperators(
        stage_cost=stage_cost,
        transition=transition,
        reset_cost=reset_cost,
        root_cost=g0 @ p,
        root_transition=_transition_rows(x, np.ascontiguousarray(h0), p),
        n_x=n_x,
        n_u=n_u,
    )
