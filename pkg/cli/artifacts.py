"""Writers for the JSON and CSV artifacts of every command."""

import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.base_monitor import MonitorRecord, MonitorStatus
from core.modulus import (
    TERM_NAMES,
    FeasibilityResult,
    ModulusSpec,
    inequality_margin,
    reduced_inequality_margin,
    rho_prime_zero,
)
from evolve.trajectory import Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def json_ready(value: Any) -> Any:
    """Replace infinities by the largest double and NaN by null, recursively."""
    if isinstance(value, dict):
        return {str(key): json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_ready(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return max(-sys.float_info.max, min(sys.float_info.max, value))
    return value


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(json_ready(data), handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {path} ({len(frame)} rows)")
    return path


def write_dump(frame: pd.DataFrame, sidecar: Dict[str, Any], stem: Path) -> Path:
    """Operator dump: ``<stem>.csv`` plus a ``<stem>.json`` sidecar describing it."""
    stem = Path(stem)
    write_frame(frame, stem.with_suffix(".csv"))
    write_json({**sidecar, "columns": list(frame.columns), "rows": len(frame)}, stem.with_suffix(".json"))
    return stem.with_suffix(".csv")


def attach_run_log(directory: Path) -> logging.Handler:
    """Mirror all log output of this process into ``<directory>/run.log``."""
    handler = logging.FileHandler(Path(directory) / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s:%(name)s:%(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: Optional[logging.Handler]) -> None:
    if handler is not None:
        logging.getLogger().removeHandler(handler)
        handler.close()


def monitor_verdict(records: Sequence[MonitorRecord]) -> Dict[str, Any]:
    """Fold one monitor's records over a run into pass/fail/skip with the worst margin."""
    judged = [record for record in records if not record.skipped]
    if not judged:
        notes = sorted({record.note for record in records if record.note})
        return {"status": MonitorStatus.SKIP.value, "records": len(records), "notes": notes}
    worst = min(judged, key=lambda record: record.margin)
    status = MonitorStatus.FAIL if any(record.failed for record in judged) else MonitorStatus.PASS
    return {
        "status": status.value,
        "records": len(records),
        "skipped": len(records) - len(judged),
        "worst_margin": worst.margin,
        "worst_t": worst.t,
        "tolerance": worst.tolerance,
        "witness": worst.witness.model_dump(mode="json") if worst.witness else None,
    }


def certificate(
    trajectory: Trajectory,
    names: Sequence[str],
    initial_beta: float,
    modulus: Optional[ModulusSpec],
    outcome: str = "completed",
) -> Dict[str, Any]:
    monitors = {name: monitor_verdict(trajectory.records_named(name)) for name in names}
    failed = sorted(name for name, verdict in monitors.items() if verdict["status"] == MonitorStatus.FAIL.value)
    return {
        "outcome": outcome,
        "passed": outcome == "completed" and not failed,
        "failed_monitors": failed,
        "initial_beta": initial_beta,
        "t_final": trajectory.final.t,
        "snapshots": len(trajectory),
        "modulus": modulus_record(modulus) if modulus is not None else None,
        "monitors": monitors,
    }


def modulus_record(spec: ModulusSpec) -> Dict[str, Any]:
    data = spec.model_dump(mode="json", by_alias=True)
    data["omega_delta"] = spec.omega_delta
    data["large_M"] = spec.large_M
    data["rho_prime_zero"] = rho_prime_zero(spec)
    return data


def feasibility_record(result: FeasibilityResult, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    data = result.model_dump(mode="json", by_alias=True)
    data.update(extra or {})
    return data


def margins_frame(spec: ModulusSpec, xis: Sequence[float]) -> pd.DataFrame:
    """Per xi: the five terms, the target, the total margin and the reduced margin."""
    rows: List[Dict[str, float]] = []
    for xi in xis:
        breakdown = inequality_margin(spec, float(xi))
        row = {"xi": breakdown.xi, "M": breakdown.M}
        row.update({name: breakdown.terms[name] for name in TERM_NAMES})
        row["target"] = breakdown.target
        row["total_margin"] = breakdown.total_margin
        row["reduced_margin"] = reduced_inequality_margin(spec, float(xi))
        rows.append(row)
    return pd.DataFrame(rows, columns=["xi", "M", *TERM_NAMES, "target", "total_margin", "reduced_margin"])
