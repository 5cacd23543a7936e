"""Experiment pipeline: solve, compare against baselines, sweep and benchmark."""

import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from .errors import ConfigError, PushcacheError, SolverDisagreementError
from .model.system import SystemConfig
from .solvers.bellman import SolverOptions
from .solvers.value_iteration import Policy, VIReport, value_iterate_degenerated, value_iterate_full
from .tools.baselines import (
    CORRIDOR_TOLERANCE,
    infinite_buffer_cost,
    no_buffer_cost,
    taut_string_schedule,
)
from .tools.file_ops import write_csv
from .tools.simulator import sample_trace

console = Console()

SWEEP_HEADER = (
    "variable",
    "eta",
    "L_mdp",
    "cost_no_buffer",
    "cost_inf_buffer",
    "cost_taut_mean",
    "cost_taut_stderr",
    "iterations",
    "wallclock_ms",
    "status",
)
BENCH_HEADER = (
    "B",
    "X",
    "wallclock_degenerated_ms",
    "wallclock_full_ms",
    "speedup",
    "L_deg",
    "L_full",
)
AGREEMENT_TOLERANCE = 1e-5


class ExperimentConfig:
    """Run-level settings; defaults come from PUSHCACHE_* environment variables."""

    def __init__(
        self,
        eps: Optional[float] = None,
        method: Optional[str] = None,
        workers: Optional[int] = None,
        output_dir: Optional[str] = None,
        alpha: float = 1.0,
        verbose: bool = False,
    ):
        try:
            self.eps = float(eps if eps is not None else os.getenv("PUSHCACHE_EPS", "1e-6"))
            self.workers = int(
                workers if workers is not None else os.getenv("PUSHCACHE_WORKERS", "1")
            )
        except ValueError as e:
            raise ConfigError(f"bad PUSHCACHE_EPS or PUSHCACHE_WORKERS value: {e}") from e
        self.method = method or os.getenv("PUSHCACHE_METHOD", "exact-rowwise")
        self.output_dir = output_dir or os.getenv("PUSHCACHE_OUTPUT_DIR", "results")
        self.alpha = alpha
        self.verbose = verbose
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.method not in ("exact-rowwise", "convex-marginal"):
            raise ConfigError(f"unknown solver method {self.method!r}")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(method=self.method)


SweepVariable = Literal["buffer-size", "request-max", "runtime"]


class SweepSpec(BaseModel):
    """A grid of instances to solve and compare."""

    variable: SweepVariable = Field(description="Quantity varied along the grid")
    values: List[int] = Field(description="Grid of B (buffer-size, runtime) or X (request-max)")
    etas: List[float] = Field(default_factory=lambda: [1.4], description="Energy bases")
    uniform_max: Optional[int] = Field(
        default=20, description="Requests uniform on {0..uniform_max} (buffer-size sweep)"
    )
    pmf: Optional[List[float]] = Field(
        default=None, description="Explicit request pmf (buffer-size sweep)"
    )
    B: int = Field(default=8, ge=0, description="Buffer size held fixed (request-max sweep)")
    eps: Optional[float] = Field(default=None, gt=0, description="Span threshold override")
    seed: Optional[int] = Field(default=None, description="Base seed for sampled traces")
    replicas: int = Field(default=20, ge=0, description="Taut-string traces per grid point")
    steps: int = Field(default=100_000, ge=1, description="Slots per taut-string trace")

    @field_validator("values")
    @classmethod
    def _non_empty(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("sweep grid is empty")
        if any(v < 0 for v in value):
            raise ValueError("grid values must be non-negative")
        return value

    @field_validator("etas")
    @classmethod
    def _etas_above_one(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("need at least one eta")
        if any(eta <= 1.0 for eta in value):
            raise ValueError("every eta must exceed 1")
        return value

    @model_validator(mode="after")
    def _one_family(self) -> "SweepSpec":
        if self.pmf is not None:
            self.uniform_max = None
        elif self.uniform_max is None:
            raise ValueError("give either 'pmf' or 'uniform_max'")
        return self

    @classmethod
    def default(cls, variable: SweepVariable) -> "SweepSpec":
        """The grids of the standard experiments."""
        if variable == "buffer-size":
            return cls(variable=variable, values=list(range(0, 41, 2)), etas=[1.4, 2.0])
        if variable == "request-max":
            return cls(variable=variable, values=list(range(2, 21)), B=8)
        return cls(variable=variable, values=list(range(2, 17, 2)), replicas=0)

    def instances(self):
        """(grid value, eta, SystemConfig) for every point, eta-major."""
        for eta in self.etas:
            for value in self.values:
                yield value, eta, self.instance(value, eta)

    def instance(self, value: int, eta: float) -> SystemConfig:
        if self.variable == "buffer-size":
            if self.pmf is not None:
                return SystemConfig(B=value, eta=eta, pmf=self.pmf)
            return SystemConfig.uniform(B=value, X=self.uniform_max, eta=eta)
        if self.variable == "request-max":
            return SystemConfig.uniform(B=self.B, X=value, eta=eta)
        return SystemConfig.uniform(B=value, X=int(1.5 * value), eta=eta)


def _point_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, dtype=np.uint64)[0] >> 1)


def taut_string_mean(
    cfg: SystemConfig, steps: int, replicas: int, seed: int, tol: float = CORRIDOR_TOLERANCE
) -> tuple[float, float]:
    """Mean and standard error of the offline per-slot energy over sampled traces."""
    if replicas < 1:
        return math.nan, math.nan
    means = []
    for k in range(replicas):
        trace = sample_trace(cfg, steps, seed=_point_seed(seed, k))
        means.append(taut_string_schedule(trace, cfg.B, cfg.eta, tol=tol).mean_energy)
    stderr = statistics.stdev(means) / math.sqrt(replicas) if replicas > 1 else 0.0
    return statistics.fmean(means), stderr


def solve_instance(
    cfg: SystemConfig, config: Optional[ExperimentConfig] = None
) -> tuple[Policy, VIReport]:
    """Degenerated-space value iteration with the run's settings."""
    config = config or ExperimentConfig()
    return value_iterate_degenerated(
        cfg,
        eps=config.eps,
        opts=config.solver_options(),
        alpha=config.alpha,
        workers=config.workers,
    )


def baseline_summary(
    cfg: SystemConfig,
    steps: int = 0,
    replicas: int = 0,
    seed: int = 0,
    tol: float = CORRIDOR_TOLERANCE,
) -> Dict[str, Any]:
    """The three reference costs of one instance; taut-string only if replicas > 0."""
    summary: Dict[str, Any] = {
        "cost_no_buffer": no_buffer_cost(cfg),
        "cost_inf_buffer": infinite_buffer_cost(cfg),
    }
    if replicas > 0 and steps > 0:
        mean, stderr = taut_string_mean(cfg, steps, replicas, seed, tol)
        summary.update(cost_taut_mean=mean, cost_taut_stderr=stderr, seed=seed)
    return summary


def _sweep_point(
    spec: SweepSpec, index: int, value: int, eta: float, config: ExperimentConfig, seed: int
) -> Dict[str, Any]:
    row: Dict[str, Any] = dict.fromkeys(SWEEP_HEADER, math.nan)
    row.update(variable=value, eta=eta, iterations=0, status="ok")
    try:
        cfg = spec.instance(value, eta)
        started = time.perf_counter()
        policy, report = value_iterate_degenerated(
            cfg,
            eps=spec.eps or config.eps,
            opts=config.solver_options(),
            alpha=config.alpha,
        )
        row["wallclock_ms"] = (time.perf_counter() - started) * 1000.0
        row.update(L_mdp=policy.average_cost, iterations=report.iterations)
        row.update(baseline_summary(cfg, spec.steps, spec.replicas, _point_seed(seed, index)))
        row.pop("seed", None)
        if policy.multichain:
            row["status"] = "multichain"
    except (PushcacheError, ValueError) as e:
        row["status"] = f"failed: {e}"
    return row


def run_sweep(
    spec: SweepSpec, config: Optional[ExperimentConfig] = None, seed: int = 0
) -> List[Dict[str, Any]]:
    """Solve every grid point; failures are kept as rows with a failed status.

    Points run on a pool of config.workers threads and each draws its traces from its
    own seed, so rows do not depend on the worker count.
    """
    config = config or ExperimentConfig()
    points = list(spec.instances())
    console.print(Panel.fit(
        f"[bold]Sweep over {spec.variable}[/bold]: {len(spec.values)} values x "
        f"{len(spec.etas)} eta, seed {seed}",
        border_style="cyan",
    ))
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = [
            pool.submit(_sweep_point, spec, i, value, eta, config, seed)
            for i, (value, eta, _) in enumerate(points)
        ]
        rows = [f.result() for f in futures]

    failed = [r for r in rows if str(r["status"]).startswith("failed")]
    if failed:
        console.print(f"[bold red]{len(failed)} grid point(s) failed.[/bold red]")
    return rows


def run_bench(
    B_values: List[int],
    eta: float = 1.4,
    eps: float = 1e-6,
    repeats: int = 3,
) -> List[Dict[str, Any]]:
    """Time both value-iteration solvers with X = 1.5 B, sequentially.

    Wall clock covers the iteration loop only and is the median over ``repeats`` runs.

    Raises:
        SolverDisagreementError: if the two solvers' costs differ by more than 1e-5;
            no timing is reported for that table.
    """
    rows = []
    for B in B_values:
        cfg = SystemConfig.uniform(B=B, X=int(1.5 * B), eta=eta)
        deg_times, full_times = [], []
        for _ in range(repeats):
            deg_policy, deg_report = value_iterate_degenerated(cfg, eps=eps)
            full_policy, full_report = value_iterate_full(cfg, eps=eps)
            deg_times.append(deg_report.phase_seconds["iterate"] * 1000.0)
            full_times.append(full_report.phase_seconds["iterate"] * 1000.0)

        L_deg, L_full = deg_policy.average_cost, full_policy.average_cost
        if abs(L_deg - L_full) > AGREEMENT_TOLERANCE:
            raise SolverDisagreementError(
                f"B={B}: degenerated L={L_deg:.9g} and full L={L_full:.9g} disagree",
                first=L_deg,
                second=L_full,
            )
        deg_ms, full_ms = statistics.median(deg_times), statistics.median(full_times)
        rows.append({
            "B": B,
            "X": cfg.X,
            "wallclock_degenerated_ms": deg_ms,
            "wallclock_full_ms": full_ms,
            "speedup": full_ms / deg_ms if deg_ms > 0 else math.inf,
            "L_deg": L_deg,
            "L_full": L_full,
        })
        console.print(f"[dim]B={B}: {deg_ms:.1f} ms vs {full_ms:.1f} ms[/dim]")
    return rows


def speedup_trend_holds(rows: List[Dict[str, Any]], allowed_inversions: int = 1) -> bool:
    """Whether speedup is non-decreasing in B up to a few noisy inversions."""
    speedups = [r["speedup"] for r in sorted(rows, key=lambda r: r["B"])]
    inversions = sum(1 for a, b in zip(speedups, speedups[1:]) if b < a)
    return inversions <= allowed_inversions


def write_sweep_csv(rows: List[Dict[str, Any]], path: str) -> Path:
    return write_csv(path, SWEEP_HEADER, ([row[k] for k in SWEEP_HEADER] for row in rows))


def write_bench_csv(rows: List[Dict[str, Any]], path: str) -> Path:
    return write_csv(path, BENCH_HEADER, ([row[k] for k in BENCH_HEADER] for row in rows))


def gnuplot_script(spec: SweepSpec, csv_path: str) -> str:
    """A gnuplot script drawing the sweep's cost curves, one block per eta."""
    label = {"buffer-size": "buffer size B", "request-max": "maximum request X"}.get(
        spec.variable, "buffer size B (X = 1.5B)"
    )
    lines = [
        "set datafile separator ','",
        "set key top right",
        f"set xlabel '{label}'",
        "set ylabel 'average energy per slot'",
        "set logscale y",
    ]
    for eta in spec.etas:
        where = f"(abs($2-{eta})<1e-12 ? $1 : 1/0)"
        lines.append(f"set title 'eta = {eta}'")
        lines.append(
            f"plot '{csv_path}' every ::1 using {where}:3 with linespoints title 'MDP policy', \\\n"
            f"     '' every ::1 using {where}:4 with lines title 'no buffer', \\\n"
            f"     '' every ::1 using {where}:5 with lines title 'infinite buffer', \\\n"
            f"     '' every ::1 using {where}:6:7 with yerrorbars title 'offline taut string'"
        )
        lines.append("pause -1")
    return "\n".join(lines) + "\n"


def display_solution(policy: Policy, report: VIReport, cfg: SystemConfig) -> None:
    """Show the solved cost next to its bounds."""
    color = "green" if report.converged and not policy.multichain else "yellow"
    console.print(Panel(
        f"[bold {color}]L = {policy.average_cost:.9g}[/bold {color}]  "
        f"(gain {policy.gain:.9g})\n"
        f"no buffer {no_buffer_cost(cfg):.6g}   infinite buffer {infinite_buffer_cost(cfg):.6g}\n"
        f"{report.iterations} sweeps, final span {report.final_span:.3g}, "
        f"method {report.method}",
        title=f"B={cfg.B}, X={cfg.X}, eta={cfg.eta}",
        border_style=color,
    ))
    if policy.multichain:
        console.print("[yellow]Policy is multichain; L is for the class reached from b=0.[/yellow]")


def display_sweep(rows: List[Dict[str, Any]]) -> None:
    shown = ("variable", "eta", "L_mdp", "cost_no_buffer", "cost_inf_buffer", "cost_taut_mean")
    table = Table(title="Sweep")
    for name in shown:
        table.add_column(name, justify="right")
    table.add_column("status")
    for row in rows:
        status = row["status"]
        style = "green" if status == "ok" else "red" if status.startswith("failed") else "yellow"
        table.add_row(*(_fmt(row[k]) for k in shown), f"[{style}]{escape(status)}[/{style}]")
    console.print(table)


def display_bench(rows: List[Dict[str, Any]]) -> None:
    table = Table(title="Value iteration wall clock (ms)")
    for name in BENCH_HEADER:
        table.add_column(name, justify="right")
    for row in rows:
        table.add_row(*(_fmt(row[k]) for k in BENCH_HEADER))
    console.print(table)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return "-" if math.isnan(value) else f"{value:.6g}"
    return str(value)
