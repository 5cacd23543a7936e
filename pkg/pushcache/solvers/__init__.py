"""Staircase assignment, per-level Bellman steps and value iteration."""

from .bellman import (
    BellmanResult,
    SolverOptions,
    bellman_convex_marginal,
    bellman_exact_rowwise,
    bellman_step,
)
from .fast import (
    DecisionMatrix,
    MarginalVector,
    StripeCell,
    StripeSupport,
    fast_assign,
    h_subgradient,
    h_value,
    is_generalized_monotone,
    marginal_feasible,
    per_column_feasible,
    satisfies_zero_pattern,
    zero_pattern_violation,
)
from .value_iteration import (
    Policy,
    ValueVector,
    VIReport,
    build_transition_matrix,
    policy_average_cost,
    stationary_distribution,
    value_iterate_degenerated,
    value_iterate_full,
)

__all__ = [
    "BellmanResult",
    "DecisionMatrix",
    "MarginalVector",
    "Policy",
    "SolverOptions",
    "StripeCell",
    "StripeSupport",
    "ValueVector",
    "VIReport",
    "bellman_convex_marginal",
    "bellman_exact_rowwise",
    "bellman_step",
    "build_transition_matrix",
    "fast_assign",
    "h_subgradient",
    "h_value",
    "is_generalized_monotone",
    "marginal_feasible",
    "per_column_feasible",
    "policy_average_cost",
    "satisfies_zero_pattern",
    "stationary_distribution",
    "value_iterate_degenerated",
    "value_iterate_full",
    "zero_pattern_violation",
]
