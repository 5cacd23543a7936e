"""Slow, generic reference solvers used to cross-check the fast ones.

Every oracle here solves its problem by brute force (a full linear program, exhaustive
enumeration or a dense dynamic program) and is only meant for small instances.
"""

import itertools
import logging
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from ..errors import InfeasibleMarginalError
from ..model.system import SystemConfig
from ..solvers.fast import DecisionMatrix, MarginalVector, cell_costs
from ..solvers.value_iteration import Policy
from .baselines import Trace

logger = logging.getLogger(__name__)

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
MAX_POLICIES = 200_000


def _decision_lp(b: int, cfg: SystemConfig, unit_costs: np.ndarray, marginal=None):
    """min sum_m p_m sum_n D[m, n] unit_costs[m, n] over the decision polytope at level b."""
    n_rows, n_cols = cfg.X + 1, cfg.B + 1
    p = cfg.p
    c = (p[:, None] * unit_costs).ravel()

    a_eq = []
    b_eq = []
    for m in range(n_rows):
        row = np.zeros((n_rows, n_cols))
        row[m, :] = 1.0
        a_eq.append(row.ravel())
        b_eq.append(1.0)
    if marginal is not None:
        for n in range(n_cols):
            col = np.zeros((n_rows, n_cols))
            col[:, n] = p
            a_eq.append(col.ravel())
            b_eq.append(float(marginal[n]))

    rows, cols = np.indices((n_rows, n_cols))
    forbidden = (rows + cols < b).ravel()
    bounds = [(0.0, 0.0) if f else (0.0, None) for f in forbidden]
    res = linprog(
        c,
        A_eq=np.array(a_eq),
        b_eq=np.array(b_eq),
        bounds=bounds,
        method="highs",
        options=LP_OPTIONS,
    )
    if res.status == 2:
        raise InfeasibleMarginalError(f"no decision matrix at level {b} has this marginal", b=b)
    if res.status != 0:
        raise RuntimeError(f"decision LP at level {b} failed: {res.message}")
    return float(res.fun), DecisionMatrix(b=b, entries=res.x.reshape(n_rows, n_cols))


def transport_lp(b: int, cfg: SystemConfig, a) -> tuple[float, DecisionMatrix]:
    """Least expected energy at level b over all decision matrices with marginal a."""
    a = a.a if isinstance(a, MarginalVector) else np.asarray(a, dtype=float)
    value, D = _decision_lp(b, cfg, cell_costs(b, cfg), marginal=a)
    return value - 1.0, D


def bellman_lp(b: int, cfg: SystemConfig, v) -> tuple[float, DecisionMatrix]:
    """One Bellman step at level b solved jointly over decision matrices."""
    v = np.asarray(getattr(v, "v", v), dtype=float)
    value, D = _decision_lp(b, cfg, cell_costs(b, cfg) + v[None, :])
    return value - 1.0, D


def enumerate_deterministic_policies(
    cfg: SystemConfig, max_policies: int = MAX_POLICIES
) -> tuple[float, Policy]:
    """Cheapest deterministic stationary policy by exhaustive search.

    Requests with zero probability never occur, so their rows are pinned to the lowest
    feasible level and left out of the search. Costs are long-run averages from b = 0.

    Raises:
        ValueError: if the search space exceeds max_policies.
    """
    live = [x for x in range(cfg.X + 1) if cfg.p[x] > 0.0]
    slots = [(b, x) for b in range(cfg.B + 1) for x in live]
    choices = [range(max(0, b - x), cfg.B + 1) for b, x in slots]
    count = int(np.prod([len(c) for c in choices], dtype=float))
    if count > max_policies:
        raise ValueError(f"{count} deterministic policies exceed the limit of {max_policies}")

    base = np.zeros((cfg.B + 1, cfg.X + 1), dtype=int)
    for b in range(cfg.B + 1):
        for x in range(cfg.X + 1):
            base[b, x] = max(0, b - x)

    best_cost, best_policy = np.inf, None
    for pick in itertools.product(*choices):
        target = base.copy()
        for (b, x), n in zip(slots, pick):
            target[b, x] = n
        decisions = []
        for b in range(cfg.B + 1):
            entries = np.zeros((cfg.X + 1, cfg.B + 1))
            entries[np.arange(cfg.X + 1), target[b]] = 1.0
            decisions.append(DecisionMatrix(b=b, entries=entries))
        policy = Policy.assemble(cfg, decisions, method="enumeration", space="full")
        if policy.average_cost < best_cost - 1e-15:
            best_cost, best_policy = policy.average_cost, policy
    logger.debug("enumerated %d deterministic policies, best L=%.12g", count, best_cost)
    return float(best_cost), best_policy


def discretized_offline_cost(
    trace: Trace,
    B: int,
    eta: float,
    b0: int = 0,
    b_end: int = 0,
    levels: Optional[int] = None,
) -> float:
    """Offline minimum energy with the buffer restricted to an evenly spaced grid on [0, B].

    Rates stay real-valued; only the buffer level after each slot is discretized. The
    result is an upper bound on the continuous optimum that tightens as levels grows.
    """
    x = trace.x if isinstance(trace, Trace) else np.asarray(trace, dtype=int)
    if x.size == 0:
        raise ValueError("trace is empty")
    levels = levels or (1000 * B + 1 if B > 0 else 1)
    grid = np.linspace(0.0, float(B), levels) if B > 0 else np.zeros(1)
    start = int(np.argmin(np.abs(grid - b0)))
    finish = int(np.argmin(np.abs(grid - b_end)))

    cost = np.full(grid.size, np.inf)
    cost[start] = 0.0
    # y = q_next - q + x_t must be non-negative
    shift = grid[None, :] - grid[:, None]
    for xt in x:
        y = shift + float(xt)
        step = np.where(y >= -1e-12, np.power(eta, np.clip(y, 0.0, None)) - 1.0, np.inf)
        cost = np.min(cost[:, None] + step, axis=0)
    return float(cost[finish])
