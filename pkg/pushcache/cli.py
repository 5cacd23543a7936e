"""CLI for pushcache - energy-minimal pushing and caching policies."""

import functools
import logging
import sys
from pathlib import Path
from typing import Optional

import click
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel

from . import __version__
from .errors import ConfigError, PushcacheError
from .orchestrator import (
    ExperimentConfig,
    SweepSpec,
    baseline_summary,
    display_bench,
    display_solution,
    display_sweep,
    gnuplot_script,
    run_bench,
    run_sweep,
    solve_instance,
    speedup_trend_holds,
    write_bench_csv,
    write_sweep_csv,
)
from .tools.baselines import CORRIDOR_TOLERANCE, taut_string_schedule
from .tools.file_ops import (
    COST_TOLERANCE,
    load_config,
    load_policy,
    save_json,
    save_policy,
    write_json,
    write_schedule_csv,
    write_slots_csv,
)
from .tools.simulator import fresh_seed, run_policy, sample_trace
from .validation import VI_EPS, display_results, run_validation

console = Console()
METHODS = click.Choice(["exact-rowwise", "convex-marginal"])
POSITIVE = click.FloatRange(min=0.0, min_open=True)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is None:
        seed = fresh_seed()
        console.print(f"[dim]seed: {seed}[/dim]")
    return seed


def guarded(command):
    """Map pushcache errors and bad input values to exit codes, Ctrl-C to a clean exit."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        load_dotenv()
        _setup_logging(kwargs.get("verbose", False))
        try:
            return command(*args, **kwargs)
        except KeyboardInterrupt:
            console.print("\n\n[yellow]Interrupted by user.[/yellow]")
            sys.exit(0)
        except PushcacheError as e:
            console.print(f"\n[bold red]Error:[/bold red] {e}", style="red")
            sys.exit(e.exit_code)
        except ValueError as e:
            console.print(f"\n[bold red]Error:[/bold red] {e}", style="red")
            sys.exit(ConfigError.exit_code)

    return wrapper


@click.group()
def cli():
    """pushcache - energy-minimal pushing and caching policies for a buffered link."""
    pass


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), required=True, help="Instance JSON: B, eta, pmf or uniform_max")
@click.option("--eps", type=float, default=None, help="Span threshold (default: $PUSHCACHE_EPS or 1e-6)")
@click.option("--method", type=METHODS, default=None, help="Bellman solver (default: $PUSHCACHE_METHOD or exact-rowwise)")
@click.option("--workers", type=int, default=None, help="Threads for the per-level Bellman steps")
@click.option("--alpha", type=float, default=1.0, show_default=True, help="Relative value iteration step size in (0, 1]")
@click.option("--out", "-o", type=click.Path(), default=None, help="Policy JSON path (default: <output dir>/policy.json)")
@click.option("--seed", type=int, default=None, help="Accepted for symmetry; solving is deterministic")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging")
@guarded
def solve(config_path, eps, method, workers, alpha, out, seed, verbose):
    """Solve for the optimal policy of one instance by value iteration."""
    cfg = load_config(config_path)
    config = ExperimentConfig(eps=eps, method=method, workers=workers, alpha=alpha, verbose=verbose)

    console.print(Panel.fit(
        f"[bold cyan]pushcache solve[/bold cyan]\n"
        f"B={cfg.B}, X={cfg.X}, eta={cfg.eta}\n"
        f"method {config.method}, eps {config.eps:g}",
        border_style="cyan",
    ))
    policy, report = solve_instance(cfg, config)
    display_solution(policy, report, cfg)

    out_path = Path(out) if out else Path(config.output_dir) / "policy.json"
    save_policy(policy, out_path, report)
    save_json(report, out_path.with_suffix(".report.json"))
    console.print(f"[green]Policy saved to {out_path}[/green]")


@cli.command()
@click.option("--policy", "-p", "policy_path", type=click.Path(exists=True), required=True, help="Policy JSON written by solve")
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), default=None, help="Instance to simulate on (default: the policy's own)")
@click.option("--steps", "-T", type=click.IntRange(min=1), default=1_000_000, show_default=True, help="Slots to simulate")
@click.option("--seed", type=int, default=None, help="Generator seed (generated and echoed if omitted)")
@click.option("--eps", type=POSITIVE, default=COST_TOLERANCE, show_default=True, help="Relative slack when re-checking the policy's stored L")
@click.option("--b0", type=click.IntRange(min=0), default=0, show_default=True, help="Initial buffer occupancy")
@click.option("--out", "-o", type=click.Path(), default=None, help="Report JSON path (default: stdout)")
@click.option("--trace", "trace_path", type=click.Path(), default=None, help="Also write the per-slot CSV here")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging")
@guarded
def simulate(policy_path, config_path, steps, seed, eps, b0, out, trace_path, verbose):
    """Run a solved policy on sampled requests and report its energy per slot."""
    policy = load_policy(policy_path, tol=eps)
    cfg = load_config(config_path) if config_path else policy.cfg
    if seed is None:
        seed = fresh_seed()
        click.echo(f"seed: {seed}", err=True)

    run = run_policy(policy, cfg, T=steps, seed=seed, b0=b0)
    if trace_path:
        write_slots_csv(run, trace_path)
    if out:
        save_json(run.report, out)
        console.print(
            f"[green]{run.report.mean_energy:.6g} +/- {run.report.stderr:.2g} per slot "
            f"(L = {policy.average_cost:.6g}); report saved to {out}[/green]"
        )
    else:
        click.echo(run.report.model_dump_json(indent=2))


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(exists=True), required=True, help="Instance JSON")
@click.option("--steps", "-T", type=click.IntRange(min=0), default=0, help="Slots per taut-string trace (0 skips it)")
@click.option("--replicas", type=click.IntRange(min=0), default=20, show_default=True, help="Taut-string traces to average")
@click.option("--seed", type=int, default=None, help="Base seed for the traces")
@click.option("--eps", type=POSITIVE, default=CORRIDOR_TOLERANCE, show_default=True, help="Corridor slack before a taut-string warning")
@click.option("--schedule", "schedule_path", type=click.Path(), default=None, help="Write one offline schedule as CSV")
@click.option("--out", "-o", type=click.Path(), default=None, help="Summary JSON path")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging")
@guarded
def baselines(config_path, steps, replicas, seed, eps, schedule_path, out, verbose):
    """Report the no-buffer, infinite-buffer and offline taut-string costs."""
    cfg = load_config(config_path)
    if steps > 0 or schedule_path:
        seed = _resolve_seed(seed)
    summary = baseline_summary(cfg, steps=steps, replicas=replicas, seed=seed or 0, tol=eps)

    for key, value in summary.items():
        console.print(f"  {key:<18} {value}")
    if schedule_path:
        trace = sample_trace(cfg, steps or 1000, seed=seed)
        write_schedule_csv(taut_string_schedule(trace, cfg.B, cfg.eta, tol=eps), schedule_path)
        console.print(f"[green]Schedule saved to {schedule_path}[/green]")
    if out:
        write_json(summary, out)


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None, help="SweepSpec JSON (default: the standard grid)")
@click.option("--variable", type=click.Choice(["buffer-size", "request-max", "runtime"]), default="buffer-size", show_default=True, help="Standard grid to use without --spec")
@click.option("--eps", type=float, default=None, help="Span threshold")
@click.option("--method", type=METHODS, default=None, help="Bellman solver")
@click.option("--workers", type=int, default=None, help="Grid points solved in parallel")
@click.option("--seed", type=int, default=None, help="Base seed for the taut-string traces")
@click.option("--out", "-o", type=click.Path(), default=None, help="CSV path (default: <output dir>/sweep_<variable>.csv)")
@click.option("--gnuplot", is_flag=True, default=False, help="Also write a gnuplot script next to the CSV")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging")
@guarded
def sweep(spec_path, variable, eps, method, workers, seed, out, gnuplot, verbose):
    """Solve a grid of instances and tabulate costs against the baselines."""
    spec = _load_spec(spec_path) if spec_path else SweepSpec.default(variable)
    config = ExperimentConfig(eps=eps, method=method, workers=workers, verbose=verbose)
    seed = _resolve_seed(seed if seed is not None else spec.seed)

    rows = run_sweep(spec, config, seed=seed)
    display_sweep(rows)
    out_path = Path(out) if out else Path(config.output_dir) / f"sweep_{spec.variable}.csv"
    write_sweep_csv(rows, out_path)
    console.print(f"[green]Sweep saved to {out_path}[/green]")
    if gnuplot:
        script = out_path.with_suffix(".gp")
        script.write_text(gnuplot_script(spec, out_path.name), encoding="utf-8")
        console.print(f"[dim]Plot script: {script}[/dim]")
    if any(str(r["status"]).startswith("failed") for r in rows):
        sys.exit(1)


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None, help="Runtime SweepSpec JSON (default: B = 2..16 step 2)")
@click.option("--eps", type=float, default=None, help="Span threshold")
@click.option("--repeats", type=int, default=3, show_default=True, help="Timed runs per point; the median is kept")
@click.option("--seed", type=int, default=None, help="Accepted for symmetry; benchmarks are deterministic")
@click.option("--out", "-o", type=click.Path(), default=None, help="CSV path (default: <output dir>/bench.csv)")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging")
@guarded
def bench(spec_path, eps, repeats, seed, out, verbose):
    """Time degenerated-space against full-space value iteration with X = 1.5B."""
    spec = _load_spec(spec_path) if spec_path else SweepSpec.default("runtime")
    config = ExperimentConfig(eps=eps, verbose=verbose)

    for eta in spec.etas:
        rows = run_bench(spec.values, eta=eta, eps=spec.eps or config.eps, repeats=repeats)
        display_bench(rows)
        suffix = "" if len(spec.etas) == 1 else f"_eta{eta:g}"
        out_path = Path(out) if out else Path(config.output_dir) / "bench.csv"
        out_path = out_path.with_name(out_path.stem + suffix + out_path.suffix)
        write_bench_csv(rows, out_path)
        console.print(f"[green]Benchmark saved to {out_path}[/green]")
        if not speedup_trend_holds(rows):
            console.print("[yellow]Speedup is not non-decreasing in B on this machine.[/yellow]")


@cli.command()
@click.option("--seed", type=int, default=None, help="Seed for every suite (generated and echoed if omitted)")
@click.option("--eps", type=POSITIVE, default=VI_EPS, show_default=True, help="Span threshold of the suites that solve instances")
@click.option("--quick", is_flag=True, default=False, help="A tenth of the default case counts")
@click.option("--suite", "suites", multiple=True, help="Run only the named suite (repeatable)")
@click.option("--out", "-o", type=click.Path(), default=None, help="Directory for reproducer files")
@click.option("--verbose", "-v", is_flag=True, default=False, help="Debug logging")
@guarded
def validate(seed, eps, quick, suites, out, verbose):
    """Cross-check every solver against its oracle on random small instances."""
    out_dir = out or ExperimentConfig().output_dir
    seed = _resolve_seed(seed)
    try:
        results = run_validation(
            seed=seed, out_dir=out_dir, quick=quick, only=list(suites) or None, eps=eps
        )
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--suite") from e
    display_results(results)
    failed = [r for r in results if not r.passed]
    if failed:
        console.print(f"[bold red]{len(failed)} suite(s) failed.[/bold red]")
        sys.exit(1)
    console.print(f"[bold green]All {len(results)} suites passed.[/bold green]")


@cli.command()
def version():
    """Display version information."""
    console.print(f"[bold cyan]pushcache[/bold cyan] v{__version__}")
    console.print("Degenerated-space value iteration with staircase assignment")


def _load_spec(path: str) -> SweepSpec:
    try:
        return SweepSpec.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"invalid sweep spec {path}: {e}") from e


if __name__ == "__main__":
    cli()
