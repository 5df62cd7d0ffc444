"""Snapshots of a run with their monitor records, and their on-disk form."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.base_monitor import MonitorRecord
from core.exceptions import GridError
from core.grid import DiffScheme, InterfaceState, beta_of, default_scheme, read_state_csv, slope, write_state_csv

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    """Ordered snapshots (the first is the initial state) and one record tuple per snapshot."""

    snapshots: Tuple[InterfaceState, ...]
    records: Tuple[Tuple[MonitorRecord, ...], ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.snapshots:
            raise GridError("a trajectory needs at least the initial state")
        if len(self.records) != len(self.snapshots):
            raise GridError("one record tuple per snapshot is required")
        times = np.array([state.t for state in self.snapshots])
        if np.any(np.diff(times) <= 0):
            raise GridError("snapshot times must be strictly increasing")

    @classmethod
    def start(
        cls, initial: InterfaceState, records: Sequence[MonitorRecord] = (), meta: Optional[Dict[str, Any]] = None
    ) -> "Trajectory":
        return cls((initial,), (tuple(records),), dict(meta or {}))

    def extended(self, state: InterfaceState, records: Sequence[MonitorRecord] = ()) -> "Trajectory":
        return Trajectory(self.snapshots + (state,), self.records + (tuple(records),), self.meta)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def times(self) -> np.ndarray:
        return np.array([state.t for state in self.snapshots])

    @property
    def initial(self) -> InterfaceState:
        return self.snapshots[0]

    @property
    def final(self) -> InterfaceState:
        return self.snapshots[-1]

    def records_named(self, name: str) -> List[MonitorRecord]:
        return [record for group in self.records for record in group if record.name == name]

    def all_records(self) -> List[MonitorRecord]:
        return [record for group in self.records for record in group]

    def summary_frame(self, scheme: Optional[DiffScheme] = None) -> pd.DataFrame:
        """One row per snapshot: slope statistics plus status and margin of every monitor."""
        rows = []
        for index, (state, group) in enumerate(zip(self.snapshots, self.records)):
            slopes = slope(state, scheme or default_scheme(state.grid))
            bounds = beta_of(slopes)
            row: Dict[str, Any] = {
                "stride": index,
                "t": state.t,
                "sup_fx": bounds.sup_fx,
                "inf_fx": bounds.inf_fx,
                "beta": bounds.beta,
                "lambda": bounds.lambda_,
                "Lambda": bounds.Lambda,
                "max_fxx": float(np.max(np.abs(slopes.fxx))),
                "boundary_drift": state.boundary_drift(),
                "modulus_margin": np.nan,
            }
            for record in group:
                row[f"{record.name}_status"] = record.status.value
                row[f"{record.name}_margin"] = np.nan if record.margin is None else record.margin
            modulus = [r for r in group if r.name == "modulus" and r.margin is not None]
            if modulus:
                row["modulus_margin"] = modulus[0].margin
            rows.append(row)
        return pd.DataFrame(rows)


def save_trajectory(trajectory: Trajectory, directory: Path, scheme: Optional[DiffScheme] = None) -> Path:
    """Write meta.json, state_<k>.csv, monitors.csv and records.jsonl into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for index, state in enumerate(trajectory.snapshots):
        write_state_csv(state, directory / f"state_{index:05d}.csv")

    frame = trajectory.summary_frame(scheme)
    frame.to_csv(directory / "monitors.csv", index=False, float_format="%.17g", lineterminator="\n")

    with open(directory / "records.jsonl", "w", encoding="utf-8") as handle:
        for index, group in enumerate(trajectory.records):
            for record in group:
                handle.write(json.dumps({"stride": index, **record.model_dump(mode="json")}, sort_keys=True) + "\n")

    meta = {**trajectory.meta, "snapshots": len(trajectory), "times": trajectory.times.tolist()}
    with open(directory / "meta.json", "w", encoding="utf-8") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write("\n")

    logger.info(f"Saved trajectory with {len(trajectory)} snapshots to {directory}")
    return directory


def load_trajectory(directory: Path) -> Trajectory:
    """Rebuild a trajectory written by :func:`save_trajectory`."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise GridError(f"{directory}: no meta.json")
    with open(meta_path, encoding="utf-8") as handle:
        meta = json.load(handle)

    paths = sorted(directory.glob("state_*.csv"))
    if not paths:
        raise GridError(f"{directory}: no state files")
    snapshots = tuple(read_state_csv(path) for path in paths)

    groups: List[List[MonitorRecord]] = [[] for _ in snapshots]
    records_path = directory / "records.jsonl"
    if records_path.exists():
        with open(records_path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    data = json.loads(line)
                    groups[data.pop("stride")].append(MonitorRecord.model_validate(data))

    meta.pop("snapshots", None)
    meta.pop("times", None)
    return Trajectory(snapshots, tuple(tuple(group) for group in groups), meta)
