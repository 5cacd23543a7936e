"""Relative value iteration for the long-run average energy per slot.

The default solver iterates over buffer levels only, one Bellman step per level. The
full-space solver iterates over every (buffer, request) state and serves as the
conventional baseline; both stop when the span of the one-step value differences drops
below epsilon.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ..errors import ConvergenceError
from ..model.system import SystemConfig, action_bounds, average_cost, energy_cost, expected_state_cost
from .bellman import BellmanResult, SolverOptions, bellman_step
from .fast import DecisionMatrix

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_MAX_ITERATIONS = 1_000_000
SUPPORT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ValueVector:
    """Relative values, one per buffer level, after t sweeps."""

    v: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class Policy:
    """A stationary randomized policy with its induced chain and long-run cost."""

    cfg: SystemConfig
    decisions: tuple[DecisionMatrix, ...]
    transition: np.ndarray
    stationary: np.ndarray
    omega: np.ndarray
    average_cost: float
    gain: float
    epsilon: float
    multichain: bool = False
    method: str = "exact-rowwise"
    space: str = "degenerated"

    def __post_init__(self):
        for name in ("transition", "stationary", "omega"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def assemble(
        cls,
        cfg: SystemConfig,
        decisions: Sequence[DecisionMatrix],
        gain: float = float("nan"),
        epsilon: float = float("nan"),
        method: str = "exact-rowwise",
        space: str = "degenerated",
    ) -> "Policy":
        """Derive transition matrix, stationary distribution and cost from decisions."""
        decisions = tuple(sorted(decisions, key=lambda D: D.b))
        for D in decisions:
            if D.entries.shape != (cfg.X + 1, cfg.B + 1):
                raise ValueError(
                    f"level {D.b}: decision shape {D.entries.shape} does not match config"
                )
            D.validate()
        transition = build_transition_matrix(decisions, cfg.p)
        stationary, multichain = stationary_distribution(transition)
        omega = state_cost_matrix(decisions, cfg)
        if multichain:
            logger.debug("policy induces more than one closed class; using the one reached from b=0")
        return cls(
            cfg=cfg,
            decisions=decisions,
            transition=transition,
            stationary=stationary,
            omega=omega,
            average_cost=average_cost(stationary, omega, cfg.p),
            gain=float(gain),
            epsilon=float(epsilon),
            multichain=multichain,
            method=method,
            space=space,
        )


class VIReport(BaseModel):
    """How a value-iteration run went."""

    space: Literal["degenerated", "full"] = Field(description="State space iterated over")
    method: str = Field(description="Bellman solver used per level")
    iterations: int = Field(description="Sweeps performed")
    final_span: float = Field(description="Span of the last one-step value difference")
    epsilon: float = Field(description="Stopping threshold on the span")
    converged: bool = Field(description="Whether the span dropped below epsilon")
    phase_seconds: dict[str, float] = Field(default_factory=dict, description="Wall clock per phase")
    gain_trace: list[float] = Field(default_factory=list, description="Gain estimate per sweep")


def build_transition_matrix(
    decisions: Union[Sequence[DecisionMatrix], dict], p
) -> np.ndarray:
    """Row b is the request-weighted mixture of the rows of D^b."""
    if isinstance(decisions, dict):
        decisions = list(decisions.values())
    decisions = sorted(decisions, key=lambda D: D.b)
    if not decisions:
        raise ValueError("no decision matrices given")
    n_levels = decisions[0].n_levels
    levels = [D.b for D in decisions]
    if levels != list(range(n_levels)):
        missing = sorted(set(range(n_levels)) - set(levels))
        raise ValueError(f"decision family incomplete; missing levels {missing}")
    p = np.asarray(p, dtype=float)
    return np.vstack([D.marginal(p) for D in decisions])


def stationary_distribution(A, tol: float = SUPPORT_TOLERANCE) -> tuple[np.ndarray, bool]:
    """Solve A' r = r, 1' r = 1 directly.

    Returns the distribution and a multichain flag. With several closed classes the
    distribution is that of the first closed class reachable from level 0.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"transition matrix must be square, got shape {A.shape}")
    if np.any(A < -tol) or np.max(np.abs(A.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("transition matrix is not row-stochastic")

    graph = csr_matrix(A > tol)
    n_classes, labels = connected_components(graph, directed=True, connection="strong")
    closed = []
    for c in range(n_classes):
        inside = labels == c
        if A[np.ix_(inside, ~inside)].sum() <= tol:
            closed.append(c)
    multichain = len(closed) > 1

    members = np.arange(n)
    if multichain:
        reachable = set(labels[breadth_first_order(graph, 0, directed=True, return_predecessors=False)])
        chosen = min(
            (c for c in closed if c in reachable),
            key=lambda c: np.flatnonzero(labels == c)[0],
        )
        members = np.flatnonzero(labels == chosen)

    sub = A[np.ix_(members, members)]
    system = sub.T - np.eye(members.size)
    system[-1, :] = 1.0
    rhs = np.zeros(members.size)
    rhs[-1] = 1.0
    r_sub = np.clip(np.linalg.solve(system, rhs), 0.0, None)

    r = np.zeros(n)
    r[members] = r_sub / r_sub.sum()
    return r, multichain


def state_cost_matrix(decisions: Sequence[DecisionMatrix], cfg: SystemConfig) -> np.ndarray:
    """Omega[b, x]: expected energy in state (b, x) under the given decisions."""
    omega = np.zeros((cfg.B + 1, cfg.X + 1))
    for D in decisions:
        for x in range(cfg.X + 1):
            omega[D.b, x] = expected_state_cost(cfg.state(D.b, x), D.entries[x], cfg.eta)
    return omega


def policy_average_cost(policy: Policy, cfg: Optional[SystemConfig] = None) -> float:
    """Long-run energy per slot r' Omega p, recomputed from the decisions."""
    cfg = cfg or policy.cfg
    transition = build_transition_matrix(policy.decisions, cfg.p)
    r, _ = stationary_distribution(transition)
    return average_cost(r, state_cost_matrix(policy.decisions, cfg), cfg.p)


def _span(delta: np.ndarray) -> float:
    return float(delta.max() - delta.min())


def value_iterate_degenerated(
    cfg: SystemConfig,
    eps: float = DEFAULT_EPS,
    opts: Optional[SolverOptions] = None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    alpha: float = 1.0,
    workers: int = 1,
    log_every: int = 1000,
) -> tuple[Policy, VIReport]:
    """Relative value iteration over buffer levels.

    Each sweep solves one Bellman step per level against the current values, stops once
    span(T v - v) < eps, and otherwise moves v by alpha (T v - v) and re-anchors v[0] = 0.

    Raises:
        ConvergenceError: after max_iterations sweeps without meeting eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    opts = opts or SolverOptions()
    levels = range(cfg.B + 1)
    v = np.zeros(cfg.B + 1)
    results: list[BellmanResult] = []
    gains: list[float] = []
    span = float("inf")
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    started = time.perf_counter()
    try:
        for t in range(1, max_iterations + 1):
            warm = [r.a_star.a for r in results] if results else [None] * len(levels)
            steps = [partial(bellman_step, b, cfg, v.copy(), opts, warm[b]) for b in levels]
            if executor is None:
                results = [step() for step in steps]
            else:
                results = list(executor.map(lambda step: step(), steps))

            delta = np.array([r.value for r in results]) - v
            span = _span(delta)
            gains.append(float(delta.max() + delta.min()) / 2.0)
            if t % log_every == 0:
                logger.debug("sweep %d: span %.3g, gain %.6g", t, span, gains[-1])
            if span < eps:
                break
            v = v + alpha * delta
            v -= v[0]
        else:
            raise ConvergenceError(
                f"value iteration did not reach span {eps:g} in {max_iterations} sweeps",
                iterations=max_iterations,
                residual=span,
                best=ValueVector(v=v, t=max_iterations),
            )
    finally:
        if executor is not None:
            executor.shutdown()
    iterated = time.perf_counter()

    policy = Policy.assemble(
        cfg,
        [r.D_star for r in results],
        gain=gains[-1],
        epsilon=eps,
        method=opts.method,
        space="degenerated",
    )
    report = VIReport(
        space="degenerated",
        method=opts.method,
        iterations=len(gains),
        final_span=span,
        epsilon=eps,
        converged=True,
        phase_seconds={"iterate": iterated - started, "assemble": time.perf_counter() - iterated},
        gain_trace=gains,
    )
    if policy.multichain:
        logger.warning("solved policy is multichain; cost reported for the class reached from b=0")
    logger.info("degenerated VI: %d sweeps, L=%.9g", len(gains), policy.average_cost)
    return policy, report


def value_iterate_full(
    cfg: SystemConfig,
    eps: float = DEFAULT_EPS,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    alpha: float = 1.0,
    tie_tol: float = 1e-12,
    log_every: int = 1000,
) -> tuple[Policy, VIReport]:
    """Relative value iteration over every (buffer, request) state.

    Each state independently scans its transmissions y in action_bounds, paying
    eta**y - 1 plus the request-averaged value of the level it lands on.

    Raises:
        ConvergenceError: after max_iterations sweeps without meeting eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    B, X, p = cfg.B, cfg.X, cfg.p
    values = np.zeros((B + 1, X + 1))
    updated = np.zeros_like(values)
    choice = np.zeros((B + 1, X + 1), dtype=int)
    gains: list[float] = []
    span = float("inf")

    started = time.perf_counter()
    for t in range(1, max_iterations + 1):
        continuation = values @ p
        for b in range(B + 1):
            for x in range(X + 1):
                lo, hi = action_bounds(b, x, B)
                ys = np.arange(lo, hi + 1)
                q = energy_cost(ys, cfg.eta) + continuation[ys + b - x]
                best = q.min()
                k = int(np.argmax(q <= best + tie_tol * (1.0 + abs(best))))
                updated[b, x] = q[k]
                choice[b, x] = ys[k] + b - x
        delta = updated - values
        span = _span(delta)
        gains.append(float(delta.max() + delta.min()) / 2.0)
        if t % log_every == 0:
            logger.debug("full sweep %d: span %.3g", t, span)
        if span < eps:
            break
        values = values + alpha * delta
        values -= values[0, 0]
    else:
        raise ConvergenceError(
            f"full-space value iteration did not reach span {eps:g} in {max_iterations} sweeps",
            iterations=max_iterations,
            residual=span,
            best=values,
        )
    iterated = time.perf_counter()

    decisions = []
    for b in range(B + 1):
        entries = np.zeros((X + 1, B + 1))
        entries[np.arange(X + 1), choice[b]] = 1.0
        decisions.append(DecisionMatrix(b=b, entries=entries))
    policy = Policy.assemble(
        cfg, decisions, gain=gains[-1], epsilon=eps, method="state-scan", space="full"
    )
    report = VIReport(
        space="full",
        method="state-scan",
        iterations=len(gains),
        final_span=span,
        epsilon=eps,
        converged=True,
        phase_seconds={"iterate": iterated - started, "assemble": time.perf_counter() - iterated},
        gain_trace=gains,
    )
    if policy.multichain:
        logger.warning("solved policy is multichain; cost reported for the class reached from b=0")
    logger.info("full-space VI: %d sweeps, L=%.9g", len(gains), policy.average_cost)
    return policy, report
