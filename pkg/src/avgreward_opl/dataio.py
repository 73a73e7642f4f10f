"""
Trajectory ingestion, persistence, validation and flattening.

Datasets are stored as JSON lines, one trajectory per line::

    {"states": [[...], ...], "actions": [0, 1, ...], "rewards": [...]}

Floats are written with ``repr`` precision, so a write/load cycle reproduces
every numeric field bit for bit.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np

from .exceptions import ActionDomainError, ParseError, ShapeError
from .models.data import Dataset, TupleTable, ValidationReport, Violation

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = ("jsonl",)
RECORD_KEYS = ("states", "actions", "rewards")


def _parse_actions(raw: Any, line_no: int) -> np.ndarray:
    if not isinstance(raw, list):
        raise ParseError("actions must be a list", details={"line": line_no})
    for t, a in enumerate(raw):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or a not in (0, 1):
            raise ActionDomainError(
                f"action {a!r} is not in {{0, 1}}", details={"line": line_no, "time": t}
            )
    return np.asarray(raw, dtype=np.int64)


def _parse_record(record: Dict[str, Any], line_no: int) -> Dict[str, np.ndarray]:
    missing = [k for k in RECORD_KEYS if k not in record]
    if missing:
        raise ParseError(f"missing keys {missing}", details={"line": line_no})

    actions = _parse_actions(record["actions"], line_no)
    try:
        states = np.asarray(record["states"], dtype=float)
        rewards = np.asarray(record["rewards"], dtype=float)
    except (TypeError, ValueError) as e:
        # numpy refuses ragged nesting or non-numeric entries
        raise ShapeError(f"non-rectangular or non-numeric arrays: {e}", details={"line": line_no}) from e

    if states.ndim != 2 or rewards.ndim != 1:
        raise ShapeError(
            "states must be a list of vectors and rewards a flat list",
            details={"line": line_no},
        )
    T = actions.shape[0]
    if T < 1 or states.shape[0] != T + 1 or rewards.shape[0] != T:
        raise ShapeError(
            f"expected T+1 states and T rewards for T={T}, got "
            f"{states.shape[0]} states and {rewards.shape[0]} rewards",
            details={"line": line_no},
        )
    return {"states": states, "actions": actions, "rewards": rewards}


def load_dataset(path: Union[str, Path], format: str = "jsonl") -> Dataset:
    """
    Load a dataset from a JSON-lines trajectory file.

    Args:
        path: File with one trajectory record per line
        format: Only ``"jsonl"`` is supported

    Returns:
        Dataset: Validated dataset with shared T and d

    Raises:
        ParseError: If a line is not a JSON object with the expected keys
        ShapeError: If arrays are ragged or trajectories disagree on T or d
        ActionDomainError: If an action is not 0 or 1
    """
    if format not in SUPPORTED_FORMATS:
        raise ParseError(f"unsupported dataset format {format!r}")

    path = Path(path)
    records: List[Dict[str, np.ndarray]] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", details={"line": line_no}) from e
            if not isinstance(record, dict):
                raise ParseError("record must be a JSON object", details={"line": line_no})
            records.append(_parse_record(record, line_no))

    if not records:
        raise ParseError("dataset file holds no trajectories", details={"path": str(path)})

    T0 = records[0]["actions"].shape[0]
    d0 = records[0]["states"].shape[1]
    for i, rec in enumerate(records):
        if rec["actions"].shape[0] != T0 or rec["states"].shape[1] != d0:
            raise ShapeError(
                f"trajectory {i} has T={rec['actions'].shape[0]}, d={rec['states'].shape[1]}; "
                f"expected T={T0}, d={d0}",
                details={"trajectory": i},
            )

    dataset = Dataset(
        states=np.stack([r["states"] for r in records]),
        actions=np.stack([r["actions"] for r in records]),
        rewards=np.stack([r["rewards"] for r in records]),
    )
    logger.info("Loaded %d trajectories (T=%d, d=%d) from %s", dataset.n, dataset.T, dataset.d, path)
    return dataset


def iter_records(dataset: Dataset) -> Iterable[Dict[str, Any]]:
    """Yield JSON-ready records in writer key order."""
    for i in range(dataset.n):
        yield {
            "states": dataset.states[i].tolist(),
            "actions": dataset.actions[i].tolist(),
            "rewards": dataset.rewards[i].tolist(),
        }


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write ``dataset`` as JSON lines and return the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in iter_records(dataset):
            fh.write(json.dumps(record))
            fh.write("\n")
    logger.debug("Wrote %d trajectories to %s", dataset.n, path)
    return path


def flatten(dataset: Dataset) -> TupleTable:
    """
    Flatten trajectories into N = nT transition tuples.

    Tuple ``h = i*T + t`` carries ``(S_t, A_t, R_{t+1}, S_{t+1})`` of
    trajectory ``i`` (0-based ``t``).
    """
    n, T, d = dataset.n, dataset.T, dataset.d
    return TupleTable(
        states=dataset.states[:, :-1, :].reshape(n * T, d),
        actions=dataset.actions.reshape(n * T),
        rewards=dataset.rewards.reshape(n * T),
        next_states=dataset.states[:, 1:, :].reshape(n * T, d),
        owner_trajectory=np.repeat(np.arange(n), T),
        n=n,
        T=T,
    )


def regroup(table: TupleTable) -> Dataset:
    """Inverse of :func:`flatten`."""
    n, T, d = table.n, table.T, table.d
    states = np.empty((n, T + 1, d))
    states[:, :-1, :] = table.states.reshape(n, T, d)
    states[:, -1, :] = table.next_states.reshape(n, T, d)[:, -1, :]
    return Dataset(
        states=states,
        actions=table.actions.reshape(n, T),
        rewards=table.rewards.reshape(n, T),
    )


def validate(dataset: Dataset, r_max: float) -> ValidationReport:
    """
    Report every reward-bound, action-domain and non-finite violation.

    Never raises on bad data; callers decide what to do with the report.
    """
    violations: List[Violation] = []

    bad_states = ~np.isfinite(dataset.states).all(axis=2)
    for i, t in zip(*np.nonzero(bad_states)):
        violations.append(
            Violation(kind="non_finite", trajectory=int(i), time=int(t), field="states")
        )

    rewards = dataset.rewards
    finite = np.isfinite(rewards)
    for i, t in zip(*np.nonzero(~finite)):
        violations.append(
            Violation(kind="non_finite", trajectory=int(i), time=int(t), field="rewards")
        )
    with np.errstate(invalid="ignore"):
        over = finite & (np.abs(rewards) > r_max)
    for i, t in zip(*np.nonzero(over)):
        violations.append(
            Violation(
                kind="reward_bound",
                trajectory=int(i),
                time=int(t),
                field="rewards",
                value=float(rewards[i, t]),
            )
        )

    off_domain = (dataset.actions != 0) & (dataset.actions != 1)
    for i, t in zip(*np.nonzero(off_domain)):
        violations.append(
            Violation(
                kind="action_domain",
                trajectory=int(i),
                time=int(t),
                field="actions",
                value=float(dataset.actions[i, t]),
            )
        )

    report = ValidationReport(r_max=r_max, violations=tuple(violations))
    if report.ok:
        logger.info("Dataset passed validation (r_max=%g)", r_max)
    else:
        logger.warning("Dataset validation found %d violation(s)", len(violations))
    return report
