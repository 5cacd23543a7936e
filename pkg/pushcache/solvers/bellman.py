"""One Bellman step at a single buffer level.

The step minimizes h(a) + a' v over realizable marginals a. Two solvers share the
contract:

- ``exact-rowwise``: with a = D' p substituted, the objective is linear in D and splits
  by row, so each request row independently takes its cheapest next level.
- ``convex-marginal``: works in marginal space with h and its subgradient only,
  alternating conditional-gradient vertices with a cutting-plane model.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linprog, minimize_scalar

from ..errors import ConvergenceError
from ..model.system import SystemConfig
from .fast import (
    DecisionMatrix,
    MarginalVector,
    cell_costs,
    h_subgradient,
    h_value,
    hall_caps,
    realize_marginal,
)

logger = logging.getLogger(__name__)

Method = Literal["exact-rowwise", "convex-marginal"]


class SolverOptions(BaseModel):
    """Settings for the per-level Bellman solver."""

    model_config = ConfigDict(frozen=True)

    method: Method = Field(default="exact-rowwise", description="Bellman step solver")
    max_iters: int = Field(default=10_000, ge=1, description="Iteration cap (convex-marginal)")
    inner_tol: float = Field(default=1e-8, gt=0, description="Gap tolerance (convex-marginal)")
    step_rule: Literal["cutting-plane", "line-search"] = Field(
        default="cutting-plane",
        description="Next iterate: cut-model minimizer or exact line search to the vertex",
    )
    tie_tol: float = Field(default=1e-12, ge=0, description="Relative tie window (exact-rowwise)")


@dataclass(frozen=True)
class BellmanResult:
    b: int
    value: float
    a_star: MarginalVector
    D_star: DecisionMatrix
    iterations: int = 1
    gap: float = 0.0


def _values(v_prev, n_levels: int) -> np.ndarray:
    v = np.asarray(getattr(v_prev, "v", v_prev), dtype=float)
    if v.shape != (n_levels,):
        raise ValueError(f"value vector has shape {v.shape}, expected ({n_levels},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("value vector must be finite")
    return v


def bellman_exact_rowwise(
    b: int, cfg: SystemConfig, v_prev, tie_tol: float = 1e-12
) -> BellmanResult:
    """Every request row picks argmin_n eta**(m+n-b) + v[n] over n >= max(0, b-m).

    Ties go to the smaller next level.
    """
    v = _values(v_prev, cfg.B + 1)
    p = cfg.p
    totals = cell_costs(b, cfg) + v[None, :]
    rows, cols = np.indices(totals.shape)
    totals = np.where(rows + cols >= b, totals, np.inf)

    best = totals.min(axis=1)
    window = tie_tol * (1.0 + np.abs(best))
    choice = np.argmax(totals <= (best + window)[:, None], axis=1)

    entries = np.zeros_like(totals)
    entries[np.arange(cfg.X + 1), choice] = 1.0
    D = DecisionMatrix(b=b, entries=entries)
    value = float(p @ totals[np.arange(cfg.X + 1), choice] - 1.0)
    return BellmanResult(b=b, value=value, a_star=MarginalVector(b, D.marginal(p)), D_star=D)


def prefix_capped_vertex(g: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Minimize g' s over {s >= 0, sum(s) = 1, s[0] + ... + s[k] <= caps[k]}.

    The caps are nested, so filling the cheapest coordinates first is optimal.
    """
    s = np.zeros(g.size)
    slack = np.array(caps, dtype=float)
    remaining = 1.0
    for n in np.argsort(g, kind="stable"):
        if remaining <= 0.0:
            break
        limit = remaining
        if n < slack.size:
            limit = min(limit, max(0.0, float(slack[n:].min())))
            slack[n:] -= limit
        if limit <= 0.0:
            continue
        s[n] = limit
        remaining -= limit
    return s


def _repair(a: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Pull a slightly infeasible LP point back onto the capped simplex."""
    a = np.clip(a, 0.0, None)
    a = a / a.sum()
    for k in range(caps.size):
        excess = a[: k + 1].sum() - caps[k]
        j = k
        while excess > 0.0 and j >= 0:
            take = min(excess, a[j])
            a[j] -= take
            a[-1] += take
            excess -= take
            j -= 1
    return a


def _solve_cut_model(cuts: list[tuple[np.ndarray, float]], caps: np.ndarray, n_levels: int):
    """Minimize max_i (g_i' a + c_i) over the capped simplex; returns (a, model value)."""
    n_vars = n_levels + 1
    objective = np.zeros(n_vars)
    objective[-1] = 1.0
    a_ub = [np.append(g, -1.0) for g, _ in cuts]
    b_ub = [-c for _, c in cuts]
    for k, cap in enumerate(caps):
        row = np.zeros(n_vars)
        row[: k + 1] = 1.0
        a_ub.append(row)
        b_ub.append(cap)
    a_eq = np.append(np.ones(n_levels), 0.0)[None, :]
    bounds = [(0.0, None)] * n_levels + [(None, None)]
    res = linprog(
        objective,
        A_ub=np.array(a_ub),
        b_ub=np.array(b_ub),
        A_eq=a_eq,
        b_eq=[1.0],
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"cut model LP failed: {res.message}")
    return res.x[:-1], float(res.fun)


def bellman_convex_marginal(
    b: int,
    cfg: SystemConfig,
    v_prev,
    opts: Optional[SolverOptions] = None,
    a_init: Optional[np.ndarray] = None,
) -> BellmanResult:
    """Minimize h(a) + a' v over realizable marginals using h and its subgradient.

    Each iterate adds the cut h(a) + a' v + g'(a' - a). The capped-simplex vertex
    minimizing g gives a lower bound; so does the cut model. With the default
    cutting-plane rule the model minimizer is the next iterate, otherwise an exact
    line search toward the vertex is taken.

    Raises:
        ConvergenceError: if the gap stays above inner_tol for max_iters iterations;
            ``best`` carries the best BellmanResult found.
    """
    opts = opts or SolverOptions(method="convex-marginal")
    v = _values(v_prev, cfg.B + 1)
    p = cfg.p
    caps = hall_caps(b, p, cfg.B + 1)

    def objective(a: np.ndarray) -> float:
        return h_value(b, cfg, a) + float(a @ v)

    if a_init is not None:
        a = _repair(np.asarray(a_init, dtype=float), caps)
    else:
        a = prefix_capped_vertex(v, caps)

    cuts: list[tuple[np.ndarray, float]] = []
    best_value, best_a = np.inf, a
    lower = -np.inf
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        value = objective(a)
        g = h_subgradient(b, cfg, a) + v
        if value < best_value:
            best_value, best_a = value, a
        vertex = prefix_capped_vertex(g, caps)
        lower = max(lower, value + float(g @ (vertex - a)))
        cuts.append((g, value - float(g @ a)))
        if best_value - lower <= opts.inner_tol:
            break
        if opts.step_rule == "cutting-plane":
            a_model, model_value = _solve_cut_model(cuts, caps, cfg.B + 1)
            lower = max(lower, model_value)
            if best_value - lower <= opts.inner_tol:
                break
            a = _repair(a_model, caps)
        else:
            direction = vertex - a
            search = minimize_scalar(
                lambda gamma: objective(_repair(a + gamma * direction, caps)),
                bounds=(0.0, 1.0),
                method="bounded",
                options={"xatol": 1e-12},
            )
            a = _repair(a + float(search.x) * direction, caps)
    else:
        result = _finish(b, cfg, best_a, best_value, iterations, best_value - lower)
        raise ConvergenceError(
            f"convex-marginal step at level {b} stopped with gap {best_value - lower:.3g}",
            iterations=iterations,
            residual=best_value - lower,
            best=result,
        )

    logger.debug("level %d: %d iterations, gap %.3g", b, iterations, best_value - lower)
    return _finish(b, cfg, best_a, best_value, iterations, max(0.0, best_value - lower))


def _finish(b, cfg, a, value, iterations, gap) -> BellmanResult:
    D, _ = realize_marginal(b, cfg, a)
    return BellmanResult(
        b=b,
        value=float(value),
        a_star=MarginalVector(b, D.marginal(cfg.p)),
        D_star=D,
        iterations=iterations,
        gap=float(gap),
    )


def bellman_step(b: int, cfg: SystemConfig, v_prev, opts: SolverOptions, a_init=None) -> BellmanResult:
    """Dispatch one Bellman step to the solver named in ``opts.method``."""
    if opts.method == "exact-rowwise":
        return bellman_exact_rowwise(b, cfg, v_prev, tie_tol=opts.tie_tol)
    return bellman_convex_marginal(b, cfg, v_prev, opts, a_init=a_init)
