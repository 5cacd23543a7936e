"""Reading and writing configs, policies, reports and CSV tables."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from pydantic import BaseModel, Field, ValidationError

from .. import __version__
from ..errors import ConfigError, PolicyMismatchError
from ..model.system import SystemConfig
from ..solvers.fast import DecisionMatrix
from ..solvers.value_iteration import Policy, VIReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCHEDULE_HEADER = ("t", "x_t", "y_t", "Y_t", "R_t", "energy_t")
SLOT_HEADER = ("t", "b", "x", "y", "energy")
COST_TOLERANCE = 1e-9


class PolicyDocument(BaseModel):
    """On-disk form of a solved policy."""

    config: dict[str, Any] = Field(description="Echo of the instance: B, eta, pmf")
    decisions: list[list[list[float]]] = Field(description="D^b for b = 0..B, row-major")
    transition: list[list[float]] = Field(description="Transition matrix over buffer levels")
    stationary: list[float] = Field(description="Stationary distribution over buffer levels")
    average_cost: float = Field(description="Long-run energy per slot")
    gain: float = Field(description="Gain estimate from the value-iteration differences")
    epsilon: float = Field(description="Span threshold the policy was solved to")
    multichain: bool = Field(default=False, description="More than one closed class")
    method: str = Field(default="exact-rowwise", description="Bellman solver")
    space: str = Field(default="degenerated", description="State space iterated over")
    report: Optional[dict[str, Any]] = Field(default=None, description="Value-iteration report")
    version: str = Field(default=__version__, description="pushcache version that wrote it")


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _read_json(path: PathLike, what: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"{what} file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {path} is not valid JSON: {e}") from e


def config_document(cfg: SystemConfig) -> dict[str, Any]:
    return {"B": cfg.B, "eta": cfg.eta, "pmf": list(cfg.pmf)}


def parse_config(data: Any) -> SystemConfig:
    """Validate a config mapping, turning pydantic errors into ConfigError."""
    try:
        return SystemConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {e}") from e


def load_config(path: PathLike) -> SystemConfig:
    return parse_config(_read_json(path, "config"))


def save_config(cfg: SystemConfig, path: PathLike) -> Path:
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_document(cfg), f, indent=2)
    return path


def policy_document(policy: Policy, report: Optional[VIReport] = None) -> PolicyDocument:
    return PolicyDocument(
        config=config_document(policy.cfg),
        decisions=[D.entries.tolist() for D in policy.decisions],
        transition=policy.transition.tolist(),
        stationary=policy.stationary.tolist(),
        average_cost=policy.average_cost,
        gain=policy.gain,
        epsilon=policy.epsilon,
        multichain=policy.multichain,
        method=policy.method,
        space=policy.space,
        report=report.model_dump() if report is not None else None,
    )


def save_policy(policy: Policy, path: PathLike, report: Optional[VIReport] = None) -> Path:
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(policy_document(policy, report).model_dump_json(indent=2))
    logger.info("policy written to %s", path)
    return path


def load_policy(path: PathLike, tol: float = COST_TOLERANCE) -> Policy:
    """Rebuild a Policy from its document and re-check it against the echoed config.

    ``tol`` is the relative slack allowed between the stored and the recomputed cost.

    Raises:
        ConfigError: if the file is unreadable or not a policy document.
        PolicyMismatchError: if the decisions do not fit the config, violate the
            decision-matrix invariants, or no longer reproduce the stored cost.
    """
    try:
        doc = PolicyDocument.model_validate(_read_json(path, "policy"))
    except ValidationError as e:
        raise ConfigError(f"invalid policy document {path}: {e}") from e
    cfg = parse_config(doc.config)

    if len(doc.decisions) != cfg.B + 1:
        raise PolicyMismatchError(
            f"policy has {len(doc.decisions)} decision matrices, config needs {cfg.B + 1}"
        )
    try:
        decisions = [DecisionMatrix(b=b, entries=rows) for b, rows in enumerate(doc.decisions)]
        policy = Policy.assemble(
            cfg,
            decisions,
            gain=doc.gain,
            epsilon=doc.epsilon,
            method=doc.method,
            space=doc.space,
        )
    except ValueError as e:
        raise PolicyMismatchError(f"policy {path} does not fit its config: {e}") from e

    drift = abs(policy.average_cost - doc.average_cost)
    if drift > tol * (1.0 + abs(doc.average_cost)):
        raise PolicyMismatchError(
            f"policy {path} stores L={doc.average_cost!r} but its decisions give "
            f"L={policy.average_cost!r}"
        )
    return policy


def save_json(model: BaseModel, path: PathLike) -> Path:
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(model.model_dump_json(indent=2))
    return path


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_schedule_csv(schedule, path: PathLike) -> Path:
    """Offline schedule as t, x_t, y_t, Y_t, R_t, energy_t."""
    return write_csv(path, SCHEDULE_HEADER, schedule.rows())


def write_slots_csv(run, path: PathLike) -> Path:
    """Per-slot simulation record as t, b, x, y, energy."""
    return write_csv(path, SLOT_HEADER, run.rows())


def write_json(data: Any, path: PathLike) -> Path:
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
    return path
