"""Reference costs a causal buffering policy is compared against.

``no_buffer_cost`` transmits every request in its own slot, ``infinite_buffer_cost``
transmits the mean request every slot, and ``taut_string_schedule`` is the offline
optimum that sees the whole request trace in advance.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..model.system import SystemConfig

logger = logging.getLogger(__name__)

CORRIDOR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Trace:
    """A finite request sequence and where it came from."""

    x: np.ndarray
    seed: Optional[int] = None
    generator: str = "given"

    def __post_init__(self):
        x = np.array(self.x, dtype=np.int64).ravel()
        if np.any(x < 0):
            raise ValueError("requests must be non-negative")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return int(self.x.size)

    def check_bounded(self, X: int) -> None:
        if self.x.size and int(self.x.max()) > X:
            raise ValueError(f"trace holds request {int(self.x.max())} above X={X}")


@dataclass(frozen=True)
class OfflineSchedule:
    """Per-slot rates y with cumulative transmission Y and cumulative demand R.

    ``Y`` and ``R`` include the slot-0 origin, so they are one longer than ``y``.
    """

    x: np.ndarray
    y: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    energy: np.ndarray
    B: int
    eta: float
    b0: int = 0

    @property
    def total_energy(self) -> float:
        return float(self.energy.sum())

    @property
    def mean_energy(self) -> float:
        return self.total_energy / max(1, self.y.size)

    @property
    def buffer(self) -> np.ndarray:
        """Occupancy b0 + Y_t - R_t after each slot, including the start."""
        return self.b0 + self.Y - self.R

    def corridor_violation(self) -> float:
        """Largest excursion of the buffer outside [0, B]; 0 when feasible."""
        b = self.buffer
        return float(max(0.0, -b.min(), b.max() - self.B))

    def rows(self):
        """(t, x_t, y_t, Y_t, R_t, energy_t) for t = 1..T."""
        for t in range(1, self.Y.size):
            yield t, int(self.x[t - 1]), self.y[t - 1], self.Y[t], self.R[t], self.energy[t - 1]


def no_buffer_cost(cfg: SystemConfig) -> float:
    """Energy per slot when every request is sent on demand."""
    return float(cfg.p @ cfg.phi_X - 1.0)


def infinite_buffer_cost(cfg: SystemConfig) -> float:
    """Energy per slot when the mean request is sent every slot."""
    return float(cfg.eta**cfg.mean_request - 1.0)


def _slope(p: tuple[float, float], q: tuple[float, float]) -> float:
    return (q[1] - p[1]) / (q[0] - p[0])


def taut_string_path(lower: np.ndarray, upper: np.ndarray, start: float, end: float):
    """Vertices of the shortest path from (0, start) to (T, end) between two boundaries.

    ``lower`` and ``upper`` give the corridor at t = 1..T-1. The path is built with a
    funnel: an apex, a concave chain of binding lower points and a convex chain of
    binding upper points. A new point that crosses the opposite chain pulls the string
    taut around it and moves the apex forward.
    """
    T = lower.size + 1
    apex = (0.0, float(start))
    path = [apex]
    lo_chain = [apex]
    up_chain = [apex]

    def push_upper(pu):
        nonlocal up_chain, lo_chain
        bent = False
        while len(lo_chain) >= 2 and _slope(lo_chain[0], pu) < _slope(lo_chain[0], lo_chain[1]):
            lo_chain.pop(0)
            path.append(lo_chain[0])
            bent = True
        if bent:
            up_chain = [lo_chain[0], pu]
            return
        while len(up_chain) >= 2 and _slope(up_chain[-2], up_chain[-1]) >= _slope(up_chain[-2], pu):
            up_chain.pop()
        up_chain.append(pu)

    def push_lower(pl):
        nonlocal up_chain, lo_chain
        bent = False
        while len(up_chain) >= 2 and _slope(up_chain[0], pl) > _slope(up_chain[0], up_chain[1]):
            up_chain.pop(0)
            path.append(up_chain[0])
            bent = True
        if bent:
            lo_chain = [up_chain[0], pl]
            return
        while len(lo_chain) >= 2 and _slope(lo_chain[-2], lo_chain[-1]) <= _slope(lo_chain[-2], pl):
            lo_chain.pop()
        lo_chain.append(pl)

    for t in range(1, T):
        push_upper((float(t), float(upper[t - 1])))
        push_lower((float(t), float(lower[t - 1])))

    finish = (float(T), float(end))
    push_upper(finish)
    push_lower(finish)
    if path[-1][0] < T:
        path.append(finish)
    return path


def taut_string_schedule(
    trace: Trace,
    B: int,
    eta: float,
    b0: int = 0,
    b_end: int = 0,
    tol: float = CORRIDOR_TOLERANCE,
) -> OfflineSchedule:
    """Minimum-energy offline schedule for a known trace.

    Cumulative transmission Y_t must keep the buffer b0 + Y_t - R_t in [0, B] and end
    with b_end items buffered. Energy eta**y - 1 is convex in the rate, so the shortest
    path through that corridor is optimal; rates are real-valued. Leaving the corridor
    by more than ``tol`` is logged as a warning.

    Raises:
        ValueError: on an empty trace, or b0 / b_end outside [0, B].
    """
    x = trace.x if isinstance(trace, Trace) else Trace(trace).x
    if x.size == 0:
        raise ValueError("trace is empty")
    if not 0 <= b0 <= B:
        raise ValueError(f"initial buffer {b0} outside [0, {B}]")
    if not 0 <= b_end <= B:
        raise ValueError(f"terminal buffer {b_end} outside [0, {B}]")
    if eta <= 1.0:
        raise ValueError(f"eta must exceed 1, got {eta}")

    R = np.concatenate([[0.0], np.cumsum(x, dtype=float)])
    T = x.size
    lower = R[1:T] - b0
    upper = lower + B
    end = R[T] - b0 + b_end

    vertices = taut_string_path(lower, upper, 0.0, end)
    ts, ys = zip(*vertices)
    Y = np.interp(np.arange(T + 1, dtype=float), ts, ys)
    # interpolation can undershoot a vertex by an ulp
    Y = np.clip(Y, np.concatenate([[0.0], lower, [end]]), np.concatenate([[0.0], upper, [end]]))
    y = np.clip(np.diff(Y), 0.0, None)
    energy = np.power(eta, y) - 1.0

    schedule = OfflineSchedule(x=x, y=y, Y=Y, R=R, energy=energy, B=B, eta=eta, b0=b0)
    violation = schedule.corridor_violation()
    if violation > tol:
        logger.warning("taut string leaves the corridor by %.3g", violation)
    logger.debug("taut string: T=%d, %d vertices, mean energy %.6g", T, len(vertices), schedule.mean_energy)
    return schedule
