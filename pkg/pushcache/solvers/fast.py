"""Optimal decision matrix for one buffer level given its next-level marginal.

For buffer level b, row m of a decision matrix D is the distribution of the next buffer
level when the request is m. Fixing the marginal a = D' p, the cheapest D is filled
greedily from the top-right corner (m=0, n=B) along a staircase, because the per-cell
cost eta**(m+n-b) rewards pairing small requests with high next levels. The optimum
h(a) is convex and piecewise linear in a; its dual prices give a subgradient.

The zero pattern D[m, n] = 0 for m + n < b is not enforced by the fill. A marginal
is realizable under that pattern iff every prefix a[0..k], k < b, fits in the request
tail P(x >= b - k). The per-column bound a[k] <= P(x >= b - k) is weaker and admits
marginals the fill cannot realize; see ``per_column_feasible``.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import InfeasibleMarginalError
from ..model.system import SystemConfig

NORMALIZATION_TOLERANCE = 1e-10
TIE_TOLERANCE = 1e-12
MONOTONE_TOLERANCE = 1e-9
ZERO_PATTERN_TOLERANCE = 1e-9
HALL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class DecisionMatrix:
    """Conditional next-level distributions for buffer level b, one row per request."""

    b: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError(f"decision matrix must be 2-D, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n_requests(self) -> int:
        return self.entries.shape[0]

    @property
    def n_levels(self) -> int:
        return self.entries.shape[1]

    def marginal(self, p: np.ndarray) -> np.ndarray:
        """Next-level distribution averaged over requests: D' p."""
        return self.entries.T @ np.asarray(p, dtype=float)

    def validate(self, tol: float = NORMALIZATION_TOLERANCE) -> None:
        """Raise ValueError unless rows are p.m.f.s respecting the zero pattern."""
        if np.any(self.entries < -tol):
            raise ValueError(f"level {self.b}: negative decision entries")
        row_error = np.max(np.abs(self.entries.sum(axis=1) - 1.0))
        if row_error > tol:
            raise ValueError(f"level {self.b}: rows deviate from 1 by {row_error:.3g}")
        violation = zero_pattern_violation(self)
        if violation > ZERO_PATTERN_TOLERANCE:
            raise ValueError(f"level {self.b}: mass {violation:.3g} on forbidden cells")


@dataclass(frozen=True)
class MarginalVector:
    """Distribution of the next buffer level given current level b."""

    b: int
    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)


@dataclass(frozen=True)
class StripeCell:
    m: int
    n: int
    mass: float


@dataclass(frozen=True)
class StripeSupport:
    """Cells visited by the staircase fill, in visiting order.

    ``mass`` is probability mass p_m * D[m, n]; zero-mass cells join the stripe where
    both a row and a column close at once.
    """

    cells: tuple[StripeCell, ...]
    visits: int = 0
    filled_rows: dict = field(default_factory=dict)

    def is_staircase(self) -> bool:
        for prev, cur in zip(self.cells, self.cells[1:]):
            if cur.m < prev.m or cur.n > prev.n:
                return False
        return True


MarginalLike = Union[MarginalVector, np.ndarray, list]


def _as_pmf(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0 or np.any(arr < -NORMALIZATION_TOLERANCE):
        raise ValueError(f"{what} must be a non-empty non-negative vector")
    total = arr.sum()
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValueError(f"{what} sums to {total!r}, expected 1")
    return np.clip(arr, 0.0, None) / total


def fast_assign(p, a: MarginalVector) -> tuple[DecisionMatrix, StripeSupport]:
    """Fill the cheapest decision matrix with marginal ``a`` along a staircase.

    Starting at (m=0, n=B), each step moves min(row remainder, column remainder) of
    probability mass into the current cell, then advances the exhausted row (down), the
    exhausted column (left) or both. At most X + B + 1 steps are taken.

    Rows with zero request probability are skipped and later given a point mass at the
    stripe's column at the time they were skipped, raised to max(0, b - m).
    """
    p = _as_pmf(p, "request pmf")
    av = _as_pmf(a.a, "marginal")
    X, B = p.size - 1, av.size - 1
    positive = p > 0.0
    later_positive = np.concatenate([np.cumsum(positive[::-1])[::-1][1:], [0]]) > 0

    D = np.zeros((X + 1, B + 1))
    cells: list[StripeCell] = []
    skipped: list[tuple[int, int]] = []
    visits = 0

    m, n = 0, B
    u, w = p[0], av[B]
    while m <= X and n >= 0:
        visits += 1
        if not positive[m]:
            skipped.append((m, n))
            m += 1
            u = p[m] if m <= X else 0.0
            continue
        if u < w - TIE_TOLERANCE:
            D[m, n] += u / p[m]
            cells.append(StripeCell(m, n, float(u)))
            w -= u
            m += 1
            u = p[m] if m <= X else 0.0
        elif u > w + TIE_TOLERANCE:
            D[m, n] += w / p[m]
            cells.append(StripeCell(m, n, float(w)))
            u -= w
            n -= 1
            w = av[n] if n >= 0 else 0.0
        else:
            # row and column close together; the row takes its full remainder
            D[m, n] += u / p[m]
            cells.append(StripeCell(m, n, float(u)))
            if n >= 1 and later_positive[m]:
                cells.append(StripeCell(m, n - 1, 0.0))
            m += 1
            n -= 1
            u = p[m] if m <= X else 0.0
            w = av[n] if n >= 0 else 0.0

    # columns ran out first: the leftover is rounding, parked in column 0
    while m <= X:
        if positive[m]:
            if u > 0.0:
                D[m, 0] += u / p[m]
                cells.append(StripeCell(m, 0, float(u)))
        else:
            skipped.append((m, 0))
        m += 1
        u = p[m] if m <= X else 0.0

    filled = {}
    for row, stripe_col in skipped:
        col = min(B, max(stripe_col, a.b - row, 0))
        D[row, col] = 1.0
        filled[row] = col

    return DecisionMatrix(b=a.b, entries=D), StripeSupport(tuple(cells), visits, filled)


def zero_pattern_violation(D: DecisionMatrix) -> float:
    """Largest entry on a forbidden cell (m + n < b); 0 when the pattern holds."""
    rows, cols = np.indices(D.entries.shape)
    forbidden = rows + cols < D.b
    if not forbidden.any():
        return 0.0
    return float(np.max(D.entries[forbidden]))


def satisfies_zero_pattern(D: DecisionMatrix, tol: float = ZERO_PATTERN_TOLERANCE) -> bool:
    return zero_pattern_violation(D) <= tol


def is_generalized_monotone(D, tol: float = MONOTONE_TOLERANCE) -> bool:
    """True iff no positive entry has another positive entry strictly below and right."""
    entries = D.entries if isinstance(D, DecisionMatrix) else np.asarray(D, dtype=float)
    support = entries > tol
    if support.shape[0] < 2 or support.shape[1] < 2:
        return True
    flipped = support[::-1, ::-1]
    reach = np.logical_or.accumulate(np.logical_or.accumulate(flipped, axis=0), axis=1)
    southeast = reach[::-1, ::-1]
    return not np.any(support[:-1, :-1] & southeast[1:, 1:])


def hall_caps(b: int, p, n_levels: int) -> np.ndarray:
    """Upper bounds on a[0] + ... + a[k] for k = 0 .. min(b, n_levels) - 1."""
    p = np.asarray(p, dtype=float)
    tails = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
    ks = np.arange(min(b, n_levels))
    return tails[np.minimum(b - ks, p.size)]


def marginal_feasible(b: int, p, a, tol: float = HALL_TOLERANCE) -> bool:
    """Whether marginal ``a`` is realizable at level b under the zero pattern."""
    a = a.a if isinstance(a, MarginalVector) else np.asarray(a, dtype=float)
    caps = hall_caps(b, p, a.size)
    return bool(np.all(np.cumsum(a)[: caps.size] <= caps + tol))


def per_column_feasible(b: int, p, a, tol: float = HALL_TOLERANCE) -> bool:
    """The column-wise bound a[m] <= P(x >= b - m), m = 0..b. Necessary, not sufficient."""
    a = a.a if isinstance(a, MarginalVector) else np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    tails = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
    for m in range(min(b, a.size - 1) + 1):
        if a[m] > tails[min(b - m, p.size)] + tol:
            return False
    return True


def _coerce_marginal(b: int, a: MarginalLike) -> MarginalVector:
    if isinstance(a, MarginalVector):
        if a.b != b:
            raise ValueError(f"marginal belongs to level {a.b}, not {b}")
        return a
    return MarginalVector(b=b, a=np.asarray(a, dtype=float))


def realize_marginal(b: int, cfg: SystemConfig, a: MarginalLike):
    a = _coerce_marginal(b, a)
    if a.a.size != cfg.B + 1:
        raise ValueError(f"marginal has {a.a.size} entries, expected {cfg.B + 1}")
    if not marginal_feasible(b, cfg.p, a):
        raise InfeasibleMarginalError(f"marginal is not realizable at level {b}", b=b)
    D, stripe = fast_assign(cfg.p, a)
    violation = zero_pattern_violation(D)
    if violation > ZERO_PATTERN_TOLERANCE:
        raise InfeasibleMarginalError(
            f"staircase fill at level {b} puts {violation:.3g} on forbidden cells",
            b=b,
            violation=violation,
        )
    return D, stripe


def cell_costs(b: int, cfg: SystemConfig) -> np.ndarray:
    """eta**(m + n - b) for every (request m, next level n)."""
    return np.outer(cfg.phi_X, cfg.phi_B) * cfg.eta ** (-b)


def decision_cost(D: DecisionMatrix, cfg: SystemConfig) -> float:
    """Expected one-slot energy at level D.b under decisions D."""
    weighted = cfg.phi_X * cfg.p
    return float(cfg.eta ** (-D.b) * weighted @ D.entries @ cfg.phi_B - 1.0)


def h_value(b: int, cfg: SystemConfig, a: MarginalLike) -> float:
    """Least expected energy at level b over decision matrices with marginal a.

    Raises:
        InfeasibleMarginalError: if a is not realizable at level b.
    """
    D, _ = realize_marginal(b, cfg, a)
    return decision_cost(D, cfg)


def h_subgradient(b: int, cfg: SystemConfig, a: MarginalLike) -> np.ndarray:
    """Dual prices of the marginal constraints at a; a subgradient of h up to a shift.

    Potentials solve mu[m] + nu[n] = eta**(m+n-b) on every stripe cell with
    mu = 0 on the first stripe row. Columns the stripe never reaches get the largest
    price that keeps every reduced cost non-negative.
    """
    _, stripe = realize_marginal(b, cfg, a)
    costs = cell_costs(b, cfg)
    mu = np.full(cfg.X + 1, np.nan)
    nu = np.full(cfg.B + 1, np.nan)

    first = stripe.cells[0]
    mu[first.m] = 0.0
    for cell in stripe.cells:
        if np.isnan(mu[cell.m]) and np.isnan(nu[cell.n]):
            raise RuntimeError(f"stripe disconnected at cell ({cell.m}, {cell.n})")
        if np.isnan(nu[cell.n]):
            nu[cell.n] = costs[cell.m, cell.n] - mu[cell.m]
        elif np.isnan(mu[cell.m]):
            mu[cell.m] = costs[cell.m, cell.n] - nu[cell.n]

    rows = np.flatnonzero(~np.isnan(mu))
    for n in np.flatnonzero(np.isnan(nu)):
        allowed = rows[rows + n >= b]
        candidates = allowed if allowed.size else rows
        nu[n] = np.min(costs[candidates, n] - mu[candidates])
    return nu
