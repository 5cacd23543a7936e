"""Randomized cross-checks of every solver against its oracle.

Each suite draws small instances from one seeded generator, runs a batch of checks and
keeps the first failing case. ``run_validation`` writes that case to a reproducer JSON
so it can be replayed by hand.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field
from rich.console import Console
from rich.table import Table

from .errors import ConvergenceError, InfeasibleMarginalError
from .model.system import SystemConfig
from .solvers.bellman import SolverOptions, bellman_convex_marginal, bellman_exact_rowwise
from .solvers.fast import (
    DecisionMatrix,
    MarginalVector,
    StripeSupport,
    decision_cost,
    fast_assign,
    h_subgradient,
    h_value,
    is_generalized_monotone,
    marginal_feasible,
    per_column_feasible,
    zero_pattern_violation,
)
from .solvers.value_iteration import value_iterate_degenerated, value_iterate_full
from .tools.baselines import Trace, taut_string_schedule
from .tools.file_ops import config_document, write_json
from .tools.oracles import (
    bellman_lp,
    discretized_offline_cost,
    enumerate_deterministic_policies,
    transport_lp,
)
from .tools.simulator import run_policy, sample_trace

logger = logging.getLogger(__name__)
console = Console()

VI_SWEEP_CAP = 100_000
VI_EPS = 1e-8
SIMULATION_STEPS = 1_000_000


class SuiteResult(BaseModel):
    name: str = Field(description="Suite identifier")
    checks: int = Field(description="Cases examined")
    failures: int = Field(description="Cases that failed")
    reproducer: Optional[str] = Field(default=None, description="Path of the first failing case")

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass
class _Tally:
    checks: int = 0
    failures: int = 0
    first: Optional[Dict[str, Any]] = None

    def record(self, ok: bool, case: Callable[[], Dict[str, Any]]) -> None:
        self.checks += 1
        if not ok:
            self.failures += 1
            if self.first is None:
                self.first = case()


def random_config(
    rng: np.random.Generator, max_B: int, max_X: int, eta_range=(1.1, 3.0), sparse: bool = True
) -> SystemConfig:
    """A random instance; with ``sparse`` some request probabilities are zeroed."""
    B = int(rng.integers(0, max_B + 1))
    X = int(rng.integers(0, max_X + 1))
    weights = rng.dirichlet(np.ones(X + 1))
    if sparse and X > 0 and rng.random() < 0.3:
        weights[rng.integers(0, X + 1)] = 0.0
        if weights.sum() == 0.0:
            weights[0] = 1.0
    weights = weights / weights.sum()
    return SystemConfig(B=B, eta=float(rng.uniform(*eta_range)), pmf=weights.tolist())


def random_decision(rng: np.random.Generator, b: int, cfg: SystemConfig) -> DecisionMatrix:
    """A random decision matrix at level b that respects the zero pattern."""
    entries = np.zeros((cfg.X + 1, cfg.B + 1))
    for m in range(cfg.X + 1):
        floor = max(0, b - m)
        support = rng.random(cfg.B + 1 - floor) < 0.6
        support[rng.integers(0, support.size)] = True
        entries[m, floor:] = rng.dirichlet(np.ones(support.size)) * support
        entries[m] /= entries[m].sum()
    return DecisionMatrix(b=b, entries=entries)


def random_marginal(rng: np.random.Generator, b: int, cfg: SystemConfig) -> MarginalVector:
    """A realizable marginal at level b, taken from a random decision matrix."""
    a = random_decision(rng, b, cfg).marginal(cfg.p)
    return MarginalVector(b=b, a=a / a.sum())


def _scale(*values: float) -> float:
    return 1.0 + max(abs(v) for v in values)


def suite_fast_vs_lp(rng, count: int) -> _Tally:
    tally = _Tally()
    for _ in range(count):
        cfg = random_config(rng, 5, 5)
        b = int(rng.integers(0, cfg.B + 1))
        a = random_marginal(rng, b, cfg)
        D, stripe = fast_assign(cfg.p, a)
        value = h_value(b, cfg, a)
        oracle, _ = transport_lp(b, cfg, a)
        ok = (
            abs(value - oracle) <= 1e-9 * _scale(oracle)
            and np.max(np.abs(D.marginal(cfg.p) - a.a)) <= 1e-10
            and np.max(np.abs(D.entries.sum(axis=1) - 1.0)) <= 1e-10
            and stripe.visits <= cfg.X + cfg.B + 1
            and stripe.is_staircase()
        )
        tally.record(ok, lambda: {
            "config": config_document(cfg), "b": b, "a": a.a.tolist(),
            "h_value": value, "lp_value": oracle,
        })
    return tally


def exchange_gains(D: DecisionMatrix, cfg: SystemConfig) -> List[float]:
    """Cost change of every feasible four-cell exchange that moves mass off the stripe."""
    p, b = cfg.p, D.b
    base = decision_cost(D, cfg)
    gains = []
    cells = [tuple(c) for c in np.argwhere(D.entries > 1e-9) if p[c[0]] > 0]
    for m1, n1 in cells:
        for m2, n2 in cells:
            if not (m2 > m1 and n2 < n1) or m1 + n2 < b:
                continue
            delta = 0.5 * min(p[m1] * D.entries[m1, n1], p[m2] * D.entries[m2, n2])
            moved = D.entries.copy()
            moved[m1, n1] -= delta / p[m1]
            moved[m1, n2] += delta / p[m1]
            moved[m2, n2] -= delta / p[m2]
            moved[m2, n1] += delta / p[m2]
            gains.append(decision_cost(DecisionMatrix(b=b, entries=moved), cfg) - base)
    return gains


def stripe_mass_gap(stripe: StripeSupport, p, a) -> float:
    """Largest gap between a stripe cell's mass and min(row remainder, column remainder).

    Replays the fill in visiting order; every cell must take exactly the smaller of the
    two remainders left when it was reached.
    """
    rows = np.asarray(p, dtype=float).copy()
    cols = np.asarray(getattr(a, "a", a), dtype=float).copy()
    gap = 0.0
    for cell in stripe.cells:
        gap = max(gap, abs(cell.mass - min(rows[cell.m], cols[cell.n])))
        rows[cell.m] -= cell.mass
        cols[cell.n] -= cell.mass
    return gap


def support_rows(D: DecisionMatrix, p, tol: float = 1e-9) -> np.ndarray:
    """Entries of D on rows that carry request probability, with round-off dropped.

    Rows with p_m = 0 never enter the cost or the marginal, so a solver may leave
    anything there.
    """
    entries = np.where(D.entries > tol, D.entries, 0.0)
    entries[np.asarray(p, dtype=float) <= 0.0] = 0.0
    return entries


def suite_monotonicity(rng, count: int) -> _Tally:
    tally = _Tally()
    for _ in range(count):
        cfg = random_config(rng, 5, 5)
        b = int(rng.integers(0, cfg.B + 1))
        a = random_marginal(rng, b, cfg)
        D, stripe = fast_assign(cfg.p, a)
        _, lp_D = transport_lp(b, cfg, a)
        gains = exchange_gains(D, cfg)
        gap = stripe_mass_gap(stripe, cfg.p, a)
        ok = (
            is_generalized_monotone(D)
            and is_generalized_monotone(support_rows(lp_D, cfg.p))
            and gap <= 1e-9
            and all(g >= -1e-12 * _scale(h_value(b, cfg, a)) for g in gains)
        )
        tally.record(ok, lambda: {
            "config": config_document(cfg), "b": b, "a": a.a.tolist(),
            "D": D.entries.tolist(), "lp_D": lp_D.entries.tolist(),
            "stripe_gap": gap, "worst_exchange": min(gains, default=0.0),
        })
    return tally


def suite_convexity(rng, count: int) -> _Tally:
    tally = _Tally()
    for _ in range(count):
        cfg = random_config(rng, 5, 5)
        b = int(rng.integers(0, cfg.B + 1))
        a1, a2 = random_marginal(rng, b, cfg).a, random_marginal(rng, b, cfg).a
        lam = float(rng.uniform(0.0, 1.0))
        mix = lam * a1 + (1.0 - lam) * a2
        h1, h2, hm = h_value(b, cfg, a1), h_value(b, cfg, a2), h_value(b, cfg, mix)
        g = h_subgradient(b, cfg, a1)
        tol = 1e-9 * _scale(h1, h2)
        ok = hm <= lam * h1 + (1.0 - lam) * h2 + tol and h2 >= h1 + g @ (a2 - a1) - tol
        tally.record(ok, lambda: {
            "config": config_document(cfg), "b": b, "a1": a1.tolist(), "a2": a2.tolist(),
            "lambda": lam,
        })
    return tally


def suite_hall_counterexample(rng, count: int) -> _Tally:
    tally = _Tally()
    cfg = SystemConfig(B=3, eta=2.0, pmf=[0.5, 0.25, 0.25])
    a = MarginalVector(b=3, a=[0.0, 0.25, 0.5, 0.25])
    D, _ = fast_assign(cfg.p, a)
    ok = (
        per_column_feasible(3, cfg.p, a)
        and not marginal_feasible(3, cfg.p, a)
        and zero_pattern_violation(D) > 1e-9
    )
    try:
        h_value(3, cfg, a)
        ok = False
    except InfeasibleMarginalError:
        pass
    tally.record(ok, lambda: {"config": config_document(cfg), "b": 3, "a": a.a.tolist()})
    return tally


def suite_bellman_agreement(rng, count: int) -> _Tally:
    tally = _Tally()
    opts = SolverOptions(method="convex-marginal")
    for _ in range(count):
        cfg = random_config(rng, 6, 6, eta_range=(1.1, 2.0))
        b = int(rng.integers(0, cfg.B + 1))
        v = rng.uniform(-2.0, 2.0, cfg.B + 1)
        exact = bellman_exact_rowwise(b, cfg, v)
        oracle, _ = bellman_lp(b, cfg, v)
        try:
            convex = bellman_convex_marginal(b, cfg, v, opts).value
        except ConvergenceError as e:
            convex = e.best.value if e.best is not None else np.nan
        ok = (
            abs(exact.value - oracle) <= 1e-9 * _scale(oracle)
            and abs(convex - exact.value) <= 1e-6 * _scale(exact.value)
            and marginal_feasible(b, cfg.p, exact.a_star)
        )
        tally.record(ok, lambda: {
            "config": config_document(cfg), "b": b, "v": v.tolist(),
            "exact": exact.value, "convex": convex, "lp": oracle,
        })
    return tally


def suite_vi_agreement(rng, count: int, eps: float = VI_EPS) -> _Tally:
    tally = _Tally()
    ground = SystemConfig(B=1, eta=2.0, pmf=[0.5, 0.5])
    best, _ = enumerate_deterministic_policies(ground)
    policy, _ = value_iterate_degenerated(ground, eps=1e-10)
    tally.record(
        abs(best - 0.5) <= 1e-12 and abs(policy.average_cost - 0.5) <= 1e-9,
        lambda: {"config": config_document(ground), "L": policy.average_cost, "enumerated": best},
    )
    for _ in range(count):
        cfg = random_config(rng, 6, 6, eta_range=(1.1, 2.0))
        try:
            L_deg = value_iterate_degenerated(cfg, eps=eps, max_iterations=VI_SWEEP_CAP)[0].average_cost
            L_full = value_iterate_full(cfg, eps=eps, max_iterations=VI_SWEEP_CAP)[0].average_cost
        except ConvergenceError:
            L_deg, L_full = np.nan, np.nan
        ok = abs(L_deg - L_full) <= 1e-6 * _scale(L_deg)
        tally.record(ok, lambda: {"config": config_document(cfg), "L_deg": L_deg, "L_full": L_full})
    return tally


def suite_simulator(
    rng, count: int, eps: float = VI_EPS, steps: int = SIMULATION_STEPS
) -> _Tally:
    """Long runs of solved policies on the instance family of the agreement suite."""
    tally = _Tally()
    for _ in range(count):
        cfg = random_config(rng, 6, 6, eta_range=(1.1, 2.0))
        try:
            policy, _ = value_iterate_degenerated(cfg, eps=eps, max_iterations=VI_SWEEP_CAP)
        except ConvergenceError as e:
            tally.record(False, lambda: {"config": config_document(cfg), "error": str(e)})
            continue
        seed = int(rng.integers(0, 2**31))
        report = run_policy(policy, cfg, T=steps, seed=seed).report
        gap = abs(report.mean_energy - policy.average_cost)
        ok = gap <= max(0.02 * policy.average_cost, 4.0 * report.stderr) + 1e-12
        tally.record(ok, lambda: {
            "config": config_document(cfg), "seed": seed, "steps": steps,
            "empirical": report.mean_energy, "stderr": report.stderr, "L": policy.average_cost,
        })
    return tally


def suite_taut_dominance(rng, count: int, eps: float = VI_EPS, steps: int = 2_000) -> _Tally:
    tally = _Tally()
    for _ in range(count):
        cfg = random_config(rng, 4, 4, eta_range=(1.1, 2.0))
        policy, _ = value_iterate_degenerated(cfg, eps=eps)
        seed = int(rng.integers(0, 2**31))
        trace = sample_trace(cfg, steps, seed=seed)
        run = run_policy(policy, cfg, seed=seed, trace=trace)
        offline = taut_string_schedule(trace, cfg.B, cfg.eta, b_end=run.report.final_buffer)
        causal = float(run.energy.sum())
        ok = (
            offline.total_energy <= causal + 1e-9 * _scale(causal)
            and offline.corridor_violation() <= 1e-9
        )

        short = Trace(x=rng.integers(0, min(cfg.X, 4) + 1, size=int(rng.integers(1, 9))))
        small = taut_string_schedule(short, min(cfg.B, 3), 1.4)
        oracle = discretized_offline_cost(short, min(cfg.B, 3), 1.4)
        ok = ok and abs(small.total_energy - oracle) <= 1e-3
        tally.record(ok, lambda: {
            "config": config_document(cfg), "seed": seed, "causal": causal,
            "offline": offline.total_energy, "short_trace": short.x.tolist(),
            "short_taut": small.total_energy, "short_dp": oracle,
        })
    return tally


SUITES: Dict[str, tuple[Callable[..., _Tally], int]] = {
    "fast-vs-lp": (suite_fast_vs_lp, 1000),
    "monotonicity": (suite_monotonicity, 300),
    "convexity": (suite_convexity, 1000),
    "hall-counterexample": (suite_hall_counterexample, 1),
    "bellman-agreement": (suite_bellman_agreement, 200),
    "vi-agreement": (suite_vi_agreement, 100),
    "simulator-consistency": (suite_simulator, 10),
    "taut-dominance": (suite_taut_dominance, 20),
}
SOLVING_SUITES = frozenset({"vi-agreement", "simulator-consistency", "taut-dominance"})


def run_validation(
    seed: int = 0,
    out_dir: str = "results",
    quick: bool = False,
    only: Optional[List[str]] = None,
    eps: float = VI_EPS,
) -> List[SuiteResult]:
    """Run the suites in a fixed order, each from its own child of ``seed``.

    ``quick`` cuts every case count tenfold and ``eps`` is the span threshold of the
    suites that solve instances. A failing suite leaves its first failing
    case in ``<out_dir>/reproducer_<suite>.json``.
    """
    names = only or list(SUITES)
    unknown = sorted(set(names) - set(SUITES))
    if unknown:
        raise ValueError(f"unknown suites: {', '.join(unknown)}")
    children = np.random.SeedSequence(seed).spawn(len(SUITES))
    results = []
    for (name, (suite, count)), child in zip(SUITES.items(), children):
        if name not in names:
            continue
        if quick:
            count = max(1, count // 10)
        settings = {"eps": eps} if name in SOLVING_SUITES else {}
        tally = suite(np.random.default_rng(child), count, **settings)
        reproducer = None
        if tally.first is not None:
            path = Path(out_dir) / f"reproducer_{name}.json"
            write_json({"suite": name, "seed": seed, **tally.first}, path)
            reproducer = str(path)
            logger.warning("suite %s failed %d of %d checks", name, tally.failures, tally.checks)
        results.append(
            SuiteResult(name=name, checks=tally.checks, failures=tally.failures, reproducer=reproducer)
        )
    return results


def display_results(results: List[SuiteResult]) -> None:
    table = Table(title="Validation")
    table.add_column("suite")
    table.add_column("checks", justify="right")
    table.add_column("failures", justify="right")
    table.add_column("result")
    for r in results:
        verdict = "[green]pass[/green]" if r.passed else f"[red]FAIL[/red] {r.reproducer}"
        table.add_row(r.name, str(r.checks), str(r.failures), verdict)
    console.print(table)
