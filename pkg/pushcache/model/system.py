"""Problem instance for a buffered link and the cost arithmetic of the buffer recursion.

Buffer occupancy follows b' = b + y - x with 0 <= b' <= B, and transmitting y items in a
slot costs eta**y - 1.
"""

from dataclasses import dataclass
from typing import Any, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..errors import InfeasibleDecisionError

PMF_TOLERANCE = 1e-12
PMF_RENORMALIZE_TOLERANCE = 1e-9

ArrayLike = Union[float, int, np.ndarray, list]


class SystemConfig(BaseModel):
    """A problem instance: buffer capacity, energy base and request distribution."""

    model_config = ConfigDict(frozen=True)

    B: int = Field(ge=0, description="Buffer capacity in content items")
    eta: float = Field(gt=1.0, description="Energy base of the power-rate law")
    pmf: tuple[float, ...] = Field(description="Request p.m.f. over {0..X}")

    @model_validator(mode="before")
    @classmethod
    def _expand_uniform(cls, data: Any) -> Any:
        if isinstance(data, dict) and "uniform_max" in data:
            if data.get("pmf") is not None:
                raise ValueError("give either 'pmf' or 'uniform_max', not both")
            data = dict(data)
            x_max = int(data.pop("uniform_max"))
            if x_max < 0:
                raise ValueError("uniform_max must be non-negative")
            data["pmf"] = [1.0 / (x_max + 1)] * (x_max + 1)
        return data

    @field_validator("pmf")
    @classmethod
    def _check_pmf(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if len(value) == 0:
            raise ValueError("pmf must have at least one entry")
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("pmf entries must be finite")
        if np.any(arr < 0):
            raise ValueError("pmf entries must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > PMF_RENORMALIZE_TOLERANCE:
            raise ValueError(f"pmf sums to {total!r}, expected 1")
        if abs(total - 1.0) > PMF_TOLERANCE:
            arr = arr / total
        return tuple(float(v) for v in arr)

    @classmethod
    def uniform(cls, B: int, X: int, eta: float) -> "SystemConfig":
        """Instance with requests uniform on {0..X}."""
        return cls(B=B, eta=eta, uniform_max=X)

    @property
    def X(self) -> int:
        return len(self.pmf) - 1

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.pmf, dtype=float)

    @property
    def phi_B(self) -> np.ndarray:
        """Powers eta**0 .. eta**B."""
        return np.power(self.eta, np.arange(self.B + 1, dtype=float))

    @property
    def phi_X(self) -> np.ndarray:
        """Powers eta**0 .. eta**X."""
        return np.power(self.eta, np.arange(self.X + 1, dtype=float))

    @property
    def mean_request(self) -> float:
        return float(np.arange(self.X + 1) @ self.p)

    def tail_mass(self, k: int) -> float:
        """Probability that a request is at least k items."""
        if k <= 0:
            return 1.0
        if k > self.X:
            return 0.0
        return float(self.p[k:].sum())

    def state(self, b: int, x: int) -> "State":
        if not 0 <= b <= self.B:
            raise ValueError(f"buffer level {b} outside [0, {self.B}]")
        if not 0 <= x <= self.X:
            raise ValueError(f"request {x} outside [0, {self.X}]")
        return State(b=b, x=x)

    def degenerated_states(self) -> tuple["DegeneratedState", ...]:
        return tuple(DegeneratedState(b=b) for b in range(self.B + 1))


@dataclass(frozen=True)
class State:
    """Full state: buffer occupancy at the start of a slot and that slot's request."""

    b: int
    x: int


@dataclass(frozen=True)
class DegeneratedState:
    """All full states sharing buffer level b."""

    b: int

    def states(self, cfg: SystemConfig) -> tuple[State, ...]:
        return tuple(cfg.state(self.b, x) for x in range(cfg.X + 1))


def energy_cost(y: ArrayLike, eta: float) -> Union[float, np.ndarray]:
    """Energy spent transmitting y items in one slot: eta**y - 1.

    Raises:
        ValueError: if any y is negative or eta <= 1.
    """
    if eta <= 1.0:
        raise ValueError(f"eta must exceed 1, got {eta}")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise ValueError(f"transmission must be non-negative, got {y!r}")
    cost = np.power(eta, y_arr) - 1.0
    return float(cost) if cost.ndim == 0 else cost


def action_bounds(b: int, x: int, B: int) -> tuple[int, int]:
    """Inclusive range of transmissions y that keep the next buffer level in [0, B]."""
    if not 0 <= b <= B:
        raise ValueError(f"buffer level {b} outside [0, {B}]")
    if x < 0:
        raise ValueError(f"request must be non-negative, got {x}")
    return max(0, x - b), B - b + x


def next_buffer(b: int, x: int, y: int, B: Optional[int] = None) -> int:
    """Buffer level after serving request x with transmission y."""
    b_next = b + y - x
    if b_next < 0 or (B is not None and b_next > B):
        upper = "inf" if B is None else B
        raise ValueError(f"b={b}, x={x}, y={y} gives next buffer {b_next} outside [0, {upper}]")
    return b_next


def expected_state_cost(state: State, d: ArrayLike, eta: float, tol: float = PMF_TOLERANCE) -> float:
    """Expected one-slot energy in state (b, x) when the next buffer level is drawn from d.

    Raises:
        InfeasibleDecisionError: if d puts mass on a level below max(0, b - x).
    """
    d = np.asarray(d, dtype=float)
    floor = max(0, state.b - state.x)
    below = float(d[:floor].sum())
    if below > tol:
        raise InfeasibleDecisionError(
            f"decision for state (b={state.b}, x={state.x}) puts mass {below:.3g} below level {floor}"
        )
    exponents = np.arange(d.size) - state.b + state.x
    return float(np.power(eta, exponents, dtype=float) @ d - 1.0)


def average_cost(r: ArrayLike, omega: ArrayLike, p: ArrayLike) -> float:
    """Long-run energy per slot r' Omega p."""
    r = np.asarray(r, dtype=float)
    omega = np.asarray(omega, dtype=float)
    p = np.asarray(p, dtype=float)
    if omega.ndim != 2 or omega.shape != (r.size, p.size):
        raise ValueError(
            f"cost matrix shape {omega.shape} does not match ({r.size}, {p.size})"
        )
    return float(r @ omega @ p)
