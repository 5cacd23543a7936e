"""Baselines, simulation, persistence and reference oracles."""

from .baselines import (
    OfflineSchedule,
    Trace,
    infinite_buffer_cost,
    no_buffer_cost,
    taut_string_schedule,
)
from .file_ops import load_config, load_policy, save_policy
from .simulator import (
    SimulationReport,
    run_policy,
    sample_request,
    sample_trace,
    simulate_policy,
)

__all__ = [
    "OfflineSchedule",
    "SimulationReport",
    "Trace",
    "infinite_buffer_cost",
    "load_config",
    "load_policy",
    "no_buffer_cost",
    "run_policy",
    "sample_request",
    "sample_trace",
    "save_policy",
    "simulate_policy",
    "taut_string_schedule",
]
