"""pushcache - energy-minimal pushing and caching policies for a buffered link."""

__version__ = "0.1.0"

from .model import SystemConfig  # noqa: E402
from .solvers import Policy, SolverOptions, value_iterate_degenerated, value_iterate_full  # noqa: E402

__all__ = [
    "Policy",
    "SolverOptions",
    "SystemConfig",
    "__version__",
    "value_iterate_degenerated",
    "value_iterate_full",
]
