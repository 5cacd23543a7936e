"""Monte Carlo execution of a buffering policy on sampled or replayed request traces."""

import logging
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from ..errors import PolicyMismatchError, PolicyViolationError
from ..model.system import SystemConfig
from ..solvers.value_iteration import Policy
from .baselines import Trace

logger = logging.getLogger(__name__)

GENERATOR = "PCG64"
DEFAULT_BATCHES = 50


def fresh_seed() -> int:
    """A random 63-bit seed, for runs where the caller did not pick one."""
    return int(np.random.SeedSequence().entropy) & (2**63 - 1)


def _request_cdf(p) -> np.ndarray:
    cdf = np.cumsum(np.asarray(p, dtype=float))
    cdf[-1] = 1.0
    return cdf


def sample_request(p, rng: np.random.Generator) -> int:
    """One request drawn from p by inverse CDF."""
    cdf = _request_cdf(p)
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)


def _draw_requests(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def sample_trace(cfg: SystemConfig, T: int, seed: Optional[int] = None) -> Trace:
    """T i.i.d. requests from cfg.pmf; the seed is recorded on the trace."""
    if T < 1:
        raise ValueError("trace length must be positive")
    seed = fresh_seed() if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    x = _draw_requests(_request_cdf(cfg.p), rng.random(T))
    return Trace(x=x, seed=seed, generator=GENERATOR)


class SimulationReport(BaseModel):
    """Summary of one simulated run of a policy."""

    steps: int = Field(description="Number of slots simulated")
    seed: Optional[int] = Field(description="Seed of the run's generator")
    generator: str = Field(default=GENERATOR, description="Bit generator name")
    b0: int = Field(default=0, description="Buffer occupancy before the first slot")
    mean_energy: float = Field(description="Empirical energy per slot")
    stderr: float = Field(description="Batch-means standard error of mean_energy")
    naive_stderr: float = Field(description="Standard error assuming independent slots")
    batches: int = Field(description="Number of batches behind stderr")
    total_energy: float = Field(description="Energy summed over the run")
    buffer_histogram: list[int] = Field(description="Slots spent at each buffer level")
    on_demand_fraction: float = Field(description="Share of slots with a request above the buffer")
    final_buffer: int = Field(description="Occupancy after the last slot")

    def occupancy(self) -> np.ndarray:
        counts = np.asarray(self.buffer_histogram, dtype=float)
        return counts / counts.sum()


@dataclass(frozen=True)
class SimulationRun:
    """A report plus the per-slot record it was computed from."""

    report: SimulationReport
    b: np.ndarray
    x: np.ndarray
    y: np.ndarray
    energy: np.ndarray

    def rows(self):
        """(t, b, x, y, energy) per slot, t counting from 1."""
        for t in range(self.x.size):
            yield t + 1, int(self.b[t]), int(self.x[t]), int(self.y[t]), float(self.energy[t])


def _batch_stderr(energy: np.ndarray, batches: int) -> tuple[float, int]:
    n = min(batches, energy.size)
    if n < 2:
        return 0.0, n
    means = np.array([chunk.mean() for chunk in np.array_split(energy, n)])
    return float(means.std(ddof=1) / np.sqrt(n)), n


def check_policy_matches(policy: Policy, cfg: SystemConfig) -> None:
    """Raise PolicyMismatchError unless the policy's dimensions fit cfg."""
    if (policy.cfg.B, policy.cfg.X) != (cfg.B, cfg.X):
        raise PolicyMismatchError(
            f"policy was solved for B={policy.cfg.B}, X={policy.cfg.X}; "
            f"config has B={cfg.B}, X={cfg.X}"
        )
    if policy.cfg.eta != cfg.eta or policy.cfg.pmf != cfg.pmf:
        logger.warning("policy was solved for a different eta or pmf; simulating it as given")


def run_policy(
    policy: Policy,
    cfg: SystemConfig,
    T: Optional[int] = None,
    seed: Optional[int] = None,
    b0: int = 0,
    trace: Optional[Trace] = None,
    batches: int = DEFAULT_BATCHES,
) -> SimulationRun:
    """Simulate slot by slot and keep the per-slot record.

    Each slot draws the request x (or reads it from ``trace``), draws the next level
    from row x of the current level's decision matrix, and pays eta**y - 1 with
    y = b_next - b + x.

    Raises:
        PolicyMismatchError: if the policy does not fit cfg.
        PolicyViolationError: if a drawn transition needs a negative transmission.
    """
    check_policy_matches(policy, cfg)
    if not 0 <= b0 <= cfg.B:
        raise ValueError(f"initial buffer {b0} outside [0, {cfg.B}]")
    seed = fresh_seed() if seed is None else int(seed)
    rng = np.random.default_rng(seed)

    if trace is not None:
        trace.check_bounded(cfg.X)
        requests = trace.x
        T = requests.size
    else:
        if T is None or T < 1:
            raise ValueError("number of steps must be positive")
        requests = _draw_requests(_request_cdf(cfg.p), rng.random(T))
    if T < 1:
        raise ValueError("trace is empty")
    draws = rng.random(T)

    cdfs = []
    for D in policy.decisions:
        rows = np.cumsum(D.entries, axis=1)
        rows[:, -1] = 1.0
        cdfs.append([list(row) for row in rows])
    cost = np.power(cfg.eta, np.arange(cfg.X + cfg.B + 1, dtype=float)) - 1.0

    levels = np.empty(T, dtype=np.int64)
    sent = np.empty(T, dtype=np.int64)
    b = b0
    for t in range(T):
        x = int(requests[t])
        b_next = min(bisect_right(cdfs[b][x], draws[t]), cfg.B)
        y = b_next - b + x
        if y < 0:
            raise PolicyViolationError(
                f"state (b={b}, x={x}) moved to level {b_next}, needing y={y}",
                b=b,
                x=x,
                b_next=b_next,
            )
        levels[t] = b
        sent[t] = y
        b = b_next

    energy = cost[sent]
    stderr, n_batches = _batch_stderr(energy, batches)
    naive = float(energy.std(ddof=1) / np.sqrt(T)) if T > 1 else 0.0
    report = SimulationReport(
        steps=T,
        seed=seed,
        b0=b0,
        mean_energy=float(energy.mean()),
        stderr=stderr,
        naive_stderr=naive,
        batches=n_batches,
        total_energy=float(energy.sum()),
        buffer_histogram=np.bincount(levels, minlength=cfg.B + 1).tolist(),
        on_demand_fraction=float(np.mean(requests > levels)),
        final_buffer=int(b),
    )
    logger.info("simulated %d slots: %.6g +/- %.2g per slot", T, report.mean_energy, stderr)
    return SimulationRun(report=report, b=levels, x=np.asarray(requests), y=sent, energy=energy)


def simulate_policy(
    policy: Policy,
    cfg: SystemConfig,
    T: Optional[int] = None,
    seed: Optional[int] = None,
    b0: int = 0,
    trace: Optional[Trace] = None,
    batches: int = DEFAULT_BATCHES,
) -> SimulationReport:
    """Empirical energy per slot and occupancy statistics of a policy; see ``run_policy``."""
    return run_policy(policy, cfg, T=T, seed=seed, b0=b0, trace=trace, batches=batches).report
