"""Binary Dynamic Search for stochastic control with controlled resets."""

from .bids import BracketError, SolveReport, backward_pass, extract_policy, solve, upper_bound
from .core import (
    DiscreteNoise,
    PolicyTable,
    ResetProblem,
    StateGrid,
    ValueTable,
    build_operators,
    expected_reset_cost,
    expected_stage_cost,
    interpolate_value,
    validate_problem,
)
from .demand import PRPParams
from .vi import AugmentedMDP, bellman_backup, solve_vi
from .sim import rollout
from .water import WaterParams, build_problem, classify_zones, export_policy

__all__ = [
    "AugmentedMDP",
    "BracketError",
    "DiscreteNoise",
    "PRPParams",
    "PolicyTable",
    "ResetProblem",
    "SolveReport",
    "StateGrid",
    "ValueTable",
    "WaterParams",
    "backward_pass",
    "bellman_backup",
    "build_operators",
    "build_problem",
    "classify_zones",
    "expected_reset_cost",
    "expected_stage_cost",
    "export_policy",
    "extract_policy",
    "interpolate_value",
    "rollout",
    "solve",
    "solve_vi",
    "upper_bound",
    "validate_problem",
]
