"""Explicit Runge-Kutta time stepping of the interface equation."""

import logging
import math
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

import config
from core.base_monitor import BaseMonitor, MonitorContext, MonitorRecord
from core.exceptions import BlowUpError
from core.grid import InterfaceState, beta_of, check_boundary, slope
from core.modulus import ModulusSpec
from core.operators import muskat_rhs
from core.quadrature import QuadratureSpec
from evolve.trajectory import Trajectory

logger = logging.getLogger(__name__)

# Steps in a row at the dt floor with growing max|f_t| before aborting.
FLOOR_STEPS = 5


class Scheme(str, Enum):
    RK2_HEUN = "rk2-heun"
    RK4 = "rk4"


# Butcher tableaus: (stage nodes c, stage matrix a, weights b)
TABLEAUS: Dict[Scheme, Tuple[Tuple[float, ...], Tuple[Tuple[float, ...], ...], Tuple[float, ...]]] = {
    Scheme.RK2_HEUN: ((0.0, 1.0), ((), (1.0,)), (0.5, 0.5)),
    Scheme.RK4: (
        (0.0, 0.5, 0.5, 1.0),
        ((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
        (1 / 6, 1 / 3, 1 / 3, 1 / 6),
    ),
}


class StepperConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Scheme = Scheme.RK4
    cfl: float = Field(default=config.DEFAULT_CFL, gt=0, le=1)
    t_end: float = Field(gt=0)
    output_stride: int = Field(default=10, ge=1)
    dt_min: float = Field(default=1e-8, gt=0)


def _rhs(state: InterfaceState, q: QuadratureSpec) -> np.ndarray:
    values = muskat_rhs(state, q)
    if not np.all(np.isfinite(values)):
        raise BlowUpError(f"non-finite right-hand side at t = {state.t:.6g}", state=state)
    return values


def step(
    state: InterfaceState, dt: float, scheme: Scheme = Scheme.RK4, q: Optional[QuadratureSpec] = None
) -> InterfaceState:
    """One explicit Runge-Kutta step of size ``dt``."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    q = q or QuadratureSpec()
    nodes, matrix, weights = TABLEAUS[Scheme(scheme)]
    slopes = []
    for c, row in zip(nodes, matrix):
        f = state.f + dt * sum((a * k for a, k in zip(row, slopes)), np.zeros_like(state.f))
        if not np.all(np.isfinite(f)):
            raise BlowUpError(f"non-finite stage values at t = {state.t:.6g}", state=state)
        slopes.append(_rhs(state.replace(f, state.t + c * dt), q))

    f_new = state.f + dt * sum(b * k for b, k in zip(weights, slopes))
    if not np.all(np.isfinite(f_new)):
        raise BlowUpError(f"non-finite heights after step at t = {state.t:.6g}", state=state)
    return state.replace(f_new, state.t + dt)


def auto_dt(state: InterfaceState, cfg: StepperConfig, q: Optional[QuadratureSpec] = None) -> float:
    """cfl*dx/(pi*Lambda) with Lambda = 1 + sup|f_x|^2, never below dt_min."""
    q = q or QuadratureSpec()
    bounds = beta_of(slope(state, q.scheme_for(state.grid)))
    return max(cfg.cfl * state.grid.dx / (math.pi * bounds.Lambda), cfg.dt_min)


def run_monitors(
    monitors: Sequence[BaseMonitor], state: InterfaceState, context: MonitorContext
) -> Tuple[MonitorRecord, ...]:
    return tuple(monitor.evaluate(state, context) for monitor in monitors)


def simulate(
    initial: InterfaceState,
    cfg: StepperConfig,
    q: Optional[QuadratureSpec] = None,
    monitors: Sequence[BaseMonitor] = (),
    modulus: Optional[ModulusSpec] = None,
    time_offset: float = 0.0,
) -> Trajectory:
    """Advance ``initial`` to ``cfg.t_end``, snapshotting and monitoring every ``output_stride`` steps."""
    q = q or QuadratureSpec()
    check_boundary(initial)
    meta = {"quadrature": q.model_dump(mode="json"), "stepper": cfg.model_dump(mode="json")}

    def context(previous: Optional[InterfaceState]) -> MonitorContext:
        return MonitorContext(
            initial=initial, quadrature=q, previous=previous, modulus=modulus, time_offset=time_offset
        )

    trajectory = Trajectory.start(initial, run_monitors(monitors, initial, context(None)), meta)
    logger.info(f"Simulating to t = {cfg.t_end} with {cfg.scheme.value}, n = {initial.grid.n}")

    state = initial
    steps = 0
    floor_run = 0
    last_speed: Optional[float] = None
    t_end = cfg.t_end

    while t_end - state.t > 1e-12 * t_end:
        dt = auto_dt(state, cfg, q)
        floored = dt <= cfg.dt_min
        final = dt >= t_end - state.t
        if final:
            dt = t_end - state.t

        try:
            new = step(state, dt, cfg.scheme, q)
        except BlowUpError as exc:
            raise BlowUpError(str(exc), state=state, trajectory=trajectory) from exc
        if final:
            new = new.replace(new.f, t_end)
        steps += 1

        speed = float(np.max(np.abs(new.f - state.f))) / dt
        floor_run = floor_run + 1 if floored and last_speed is not None and speed > last_speed else 0
        last_speed = speed
        if floor_run >= FLOOR_STEPS:
            raise BlowUpError(
                f"dt pinned at {cfg.dt_min:g} for {FLOOR_STEPS} steps with growing max|f_t| at t = {new.t:.6g}",
                state=new,
                trajectory=trajectory,
            )
        logger.debug(f"step {steps}: t = {new.t:.6g}, dt = {dt:.3e}, max|f_t| = {speed:.3e}")

        if steps % cfg.output_stride == 0 or final:
            records = run_monitors(monitors, new, context(trajectory.final))
            trajectory = trajectory.extended(new, records)
        state = new

    logger.info(f"Reached t = {state.t:.6g} after {steps} steps ({len(trajectory)} snapshots)")
    return trajectory
