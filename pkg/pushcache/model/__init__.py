"""Problem-instance types and the cost formulas shared by every solver."""

from .system import (
    DegeneratedState,
    State,
    SystemConfig,
    action_bounds,
    average_cost,
    energy_cost,
    expected_state_cost,
    next_buffer,
)

__all__ = [
    "DegeneratedState",
    "State",
    "SystemConfig",
    "action_bounds",
    "average_cost",
    "energy_cost",
    "expected_state_cost",
    "next_buffer",
]
