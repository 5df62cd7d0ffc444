"""Checks that need a whole trajectory rather than one snapshot."""

import logging
import math
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from certificates.monitors import CurvatureMonitor, MaxPrincipleMonitor, modulus_check
from core.base_monitor import MonitorContext, MonitorRecord, Witness
from core.grid import slope
from core.modulus import ModulusSpec
from core.quadrature import QuadratureSpec
from evolve.trajectory import Trajectory

logger = logging.getLogger(__name__)


def quadrature_of(traj: Trajectory) -> QuadratureSpec:
    """The quadrature a trajectory was computed with (defaults if not recorded)."""
    data = traj.meta.get("quadrature")
    return QuadratureSpec.model_validate(data) if data else QuadratureSpec()


def _contexts(traj: Trajectory, q: QuadratureSpec, modulus: Optional[ModulusSpec], time_offset: float):
    for index, state in enumerate(traj.snapshots):
        previous = traj.snapshots[index - 1] if index else None
        yield state, MonitorContext(
            initial=traj.initial, quadrature=q, previous=previous, modulus=modulus, time_offset=time_offset
        )


def max_principle_check(
    traj: Trajectory, tol: Optional[float] = None, q: Optional[QuadratureSpec] = None
) -> List[MonitorRecord]:
    """Per stride: sup f_x non-increasing, inf f_x non-decreasing, beta below its initial value."""
    q = q or quadrature_of(traj)
    monitor = MaxPrincipleMonitor(tolerance=tol)
    return [monitor.evaluate(state, context) for state, context in _contexts(traj, q, None, 0.0)]


def curvature_decay_check(
    traj: Trajectory,
    rho_spec: ModulusSpec,
    q: Optional[QuadratureSpec] = None,
    slack: float = 0.1,
    time_offset: float = 0.0,
) -> List[MonitorRecord]:
    """Per stride: max|f_xx(t)| against rho'(0)/t."""
    q = q or quadrature_of(traj)
    monitor = CurvatureMonitor(slack=slack)
    records = [monitor.evaluate(state, context) for state, context in _contexts(traj, q, rho_spec, time_offset)]
    growth = [r.detail.get("fxx_growth", 0.0) for r in records if not r.skipped]
    if any(g > 0 for g in growth[1:]):
        logger.info(f"max|f_xx| increased at {sum(g > 0 for g in growth[1:])} strides after the first")
    return records


class BreakthroughEvent(BaseModel):
    """First stride at which the slope touches or crosses rho(./t)."""

    model_config = ConfigDict(frozen=True)

    t: float
    margin: float
    witness: Optional[Witness] = None


def breakthrough_detect(
    traj: Trajectory,
    rho_spec: ModulusSpec,
    q: Optional[QuadratureSpec] = None,
    time_offset: float = 0.0,
    cap: Optional[int] = None,
) -> Optional[BreakthroughEvent]:
    """Scan strides in order; return the first with a non-positive modulus margin."""
    q = q or quadrature_of(traj)
    for state in traj.snapshots:
        record = modulus_check(state, rho_spec, q=q, time_offset=time_offset, cap=cap)
        if record.skipped:
            continue
        if record.margin <= 0:
            logger.info(f"Breakthrough at t = {state.t:.6g} (margin {record.margin:.3e})")
            return BreakthroughEvent(t=state.t, margin=record.margin, witness=record.witness)
    return None


class HoelderReport(BaseModel):
    """Empirical time-Hoelder exponent of f_x around one reference time."""

    t_ref: float
    applicable: bool
    alpha: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    deltas: List[float] = Field(default_factory=list)
    differences: List[float] = Field(default_factory=list)
    note: Optional[str] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"delta": self.deltas, "sup_difference": self.differences})


def time_hoelder_diag(
    traj: Trajectory, t: Optional[float] = None, q: Optional[QuadratureSpec] = None, level: float = 0.95
) -> HoelderReport:
    """Fit log||f_x(t+D) - f_x(t)|| against log|D| over snapshots in (t/2, 3t/2)."""
    q = q or quadrature_of(traj)
    times = traj.times
    positive = np.flatnonzero(times > 0)
    if positive.size == 0:
        return HoelderReport(t_ref=0.0, applicable=False, note="no snapshot with t > 0")

    ref = int(positive[positive.size // 2]) if t is None else int(np.argmin(np.abs(times - t)))
    t_ref = float(times[ref])
    scheme = q.scheme_for(traj.initial.grid)
    fx_ref = slope(traj.snapshots[ref], scheme).fx

    deltas, differences = [], []
    for index, state in enumerate(traj.snapshots):
        if index == ref or not (t_ref / 2 < state.t < 1.5 * t_ref):
            continue
        deltas.append(abs(state.t - t_ref))
        differences.append(float(np.max(np.abs(slope(state, scheme).fx - fx_ref))))

    report = dict(t_ref=t_ref, deltas=deltas, differences=differences)
    if len(deltas) < 2:
        return HoelderReport(applicable=False, note="fewer than three snapshots in the window", **report)
    if not all(d > 0 for d in differences):
        return HoelderReport(applicable=False, note="f_x does not change in the window", **report)

    fit = stats.linregress(np.log(deltas), np.log(differences))
    if len(deltas) > 2:
        half_width = stats.t.ppf(0.5 + level / 2, len(deltas) - 2) * fit.stderr
    else:
        half_width = math.nan
    logger.debug(f"Hoelder fit at t = {t_ref:.4g}: alpha = {fit.slope:.4f} +- {half_width:.3g}")
    return HoelderReport(
        applicable=True,
        alpha=float(fit.slope),
        ci_low=float(fit.slope - half_width),
        ci_high=float(fit.slope + half_width),
        **report,
    )
