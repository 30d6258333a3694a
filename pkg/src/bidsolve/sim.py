"""Monte Carlo rollouts of a tank policy under fresh PRP demand draws."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import PolicyTable
from .demand import sample
from .water import WaterInstance


@dataclass
class RolloutStats:
    mean_cost: float
    std_error: float
    shortfall_freq: float
    flush_freq: float
    mean_order_L: float
    episodes: int
    horizon: int

    def as_dict(self) -> dict:
        return asdict(self)


def stage_cost_bound(instance: WaterInstance, policy: PolicyTable) -> float:
    """Largest expected one-day cost (flush + stage) of the policy over the grid."""
    prob, x = instance.problem, instance.grid.points
    w, p = instance.noise.values, instance.noise.probs
    worst = 0.0
    for t in range(policy.horizon_cap + 1):
        r = policy.reset[:, t].astype(bool)
        u = policy.control[:, t]
        cost = np.empty(x.size)
        if r.any():
            g = prob.stage_cost(np.float64(prob.reset_state), 0, u[r, None], w) @ p
            s = np.broadcast_to(prob.reset_cost(x[r, None], t, w), (r.sum(), w.size)) @ p
            cost[r] = g + s
        if (~r).any():
            cost[~r] = prob.stage_cost(x[~r, None], t, u[~r, None], w) @ p
        worst = max(worst, float(cost.max()))
    return worst


def effective_horizon(gamma: float, bound: float, tail_tol: float) -> int:
    """Smallest N with gamma^N * bound / (1 - gamma) <= tail_tol (at least 1)."""
    if gamma == 0 or bound <= 0:
        return 1
    n = math.log(tail_tol * (1 - gamma) / bound) / math.log(gamma)
    return max(1, math.ceil(n - 1e-12))


def rollout(
    instance: WaterInstance,
    policy: PolicyTable,
    episodes: int = 10_000,
    tail_tol: float = 1e-3,
    seed: int = 0,
    record: bool = False,
):
    """Simulate ``episodes`` trajectories from an empty, fresh tank.

    Actions come from the nearest grid point of the current level; demand is
    drawn from the PRP sampler, not the solver's atoms.  With ``record`` the
    first episode's day-by-day log is returned alongside the stats.
    """
    if not tail_tol > 0:
        raise ValueError("tail_tol must be > 0")
    prob, grid = instance.problem, instance.grid
    k = prob.horizon_cap
    gamma = prob.discount
    if policy.reset.shape != (grid.n_points, k + 1):
        raise ValueError("policy table does not match the grid and horizon cap")
    horizon = effective_horizon(gamma, stage_cost_bound(instance, policy), tail_tol)
    rng = np.random.default_rng(seed)
    demand = instance.params.demand

    x = np.full(episodes, prob.reset_state)
    t = np.zeros(episodes, dtype=int)
    total = np.zeros(episodes)
    shortfalls = flushes = 0
    order_sum = 0.0
    log = []
    for n in range(horizon):
        i = grid.nearest_index(x)
        r = policy.reset[i, t].astype(bool)
        u = policy.control[i, t]
        d = sample(demand, rng, episodes)
        xi = np.where(r, prob.reset_state, x)
        tau = np.where(r, 0, t)
        cost = np.empty(episodes)
        nxt = np.empty(episodes)
        # evaluators take a scalar age, so group by pseudo-age
        for age in np.unique(tau):
            m = tau == age
            cost[m] = prob.stage_cost(xi[m], int(age), u[m], d[m])
            nxt[m] = prob.dynamics(xi[m], int(age), u[m], d[m])
        for age in np.unique(t[r]):
            m = r & (t == age)
            cost[m] += prob.reset_cost(x[m], int(age), d[m])
        total += gamma**n * cost
        shortfalls += int(np.count_nonzero(xi + u - d < 0))
        flushes += int(np.count_nonzero(r))
        order_sum += float(u.sum())
        if record:
            log.append({
                "day": n, "x_L": float(x[0]), "t": int(t[0]), "flush": int(r[0]),
                "order_L": float(u[0]), "demand_L": float(d[0]), "cost": float(cost[0]),
            })
        x = nxt
        t = tau + 1
        if np.any(t > k):
            raise AssertionError("age exceeded the cap; policy violates the forced reset")

    days = episodes * horizon
    std = float(total.std(ddof=1)) if episodes > 1 else 0.0
    stats = RolloutStats(
        mean_cost=float(total.mean()),
        std_error=std / math.sqrt(episodes),
        shortfall_freq=shortfalls / days,
        flush_freq=flushes / days,
        mean_order_L=order_sum / days,
        episodes=episodes,
        horizon=horizon,
    )
    return (stats, log) if record else stats
