"""Base monitor class with common functionality."""

import logging
import math
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

import config
from core.grid import Grid, InterfaceState, beta_of, slope
from core.modulus import ModulusSpec
from core.quadrature import QuadratureSpec

logger = logging.getLogger(__name__)


class MonitorStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIP = "skip"


class Witness(BaseModel):
    """Location of the extremal pair behind a margin."""

    model_config = ConfigDict(frozen=True)

    x: Optional[float] = None
    y: Optional[float] = None
    h: Optional[float] = None
    xi: Optional[float] = None


def finite(value: float) -> float:
    """Clamp infinities to the largest double so records stay JSON numbers."""
    if math.isnan(value):
        return value
    return max(-sys.float_info.max, min(sys.float_info.max, value))


class MonitorRecord(BaseModel):
    """Outcome of one monitor at one time."""

    model_config = ConfigDict(frozen=True)

    t: float
    name: str
    status: MonitorStatus
    margin: Optional[float] = None
    tolerance: float = Field(default=0.0, ge=0)
    witness: Optional[Witness] = None
    detail: Dict[str, float] = Field(default_factory=dict)
    note: Optional[str] = None

    @model_validator(mode="after")
    def _status_matches_margin(self) -> "MonitorRecord":
        if self.status is MonitorStatus.SKIP:
            return self
        if self.margin is None or math.isnan(self.margin):
            raise ValueError(f"monitor '{self.name}' needs a margin unless skipped")
        expected = MonitorStatus.PASS if self.margin >= -self.tolerance else MonitorStatus.FAIL
        if self.status is not expected:
            raise ValueError(f"status {self.status.value} contradicts margin {self.margin:g}")
        return self

    @property
    def passed(self) -> bool:
        return self.status is MonitorStatus.PASS

    @property
    def failed(self) -> bool:
        return self.status is MonitorStatus.FAIL

    @property
    def skipped(self) -> bool:
        return self.status is MonitorStatus.SKIP


@dataclass(frozen=True)
class MonitorContext:
    """What a monitor may need besides the snapshot it is judging."""

    initial: InterfaceState
    quadrature: QuadratureSpec
    previous: Optional[InterfaceState] = None
    modulus: Optional[ModulusSpec] = None
    time_offset: float = 0.0

    @cached_property
    def initial_beta(self) -> float:
        return beta_of(slope(self.initial, self.quadrature.scheme_for(self.initial.grid))).beta


class BaseMonitor(ABC):
    """Base class for all snapshot monitors."""

    def __init__(self, name: str, description: str, tolerance: Optional[float] = None):
        self.name = name
        self.description = description
        self.fixed_tolerance = tolerance

    @abstractmethod
    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        """Judge ``state`` and return its record."""
        pass

    def tolerance_for(self, grid: Grid) -> float:
        """Declared tolerance: max(10*dx^2, quadrature tolerance) unless fixed."""
        if self.fixed_tolerance is not None:
            return self.fixed_tolerance
        return max(10 * grid.dx ** 2, config.QUADRATURE_TOLERANCE)

    def judge(
        self,
        state: InterfaceState,
        margin: float,
        witness: Optional[Witness] = None,
        detail: Optional[Dict[str, float]] = None,
        tolerance: Optional[float] = None,
    ) -> MonitorRecord:
        tol = self.tolerance_for(state.grid) if tolerance is None else tolerance
        margin = finite(float(margin))
        status = MonitorStatus.PASS if margin >= -tol else MonitorStatus.FAIL
        if status is MonitorStatus.FAIL:
            logger.warning(f"{self.name} failed at t = {state.t:.6g}: margin {margin:.3e} < -{tol:.1e}")
        return MonitorRecord(
            t=state.t,
            name=self.name,
            status=status,
            margin=margin,
            tolerance=tol,
            witness=witness,
            detail={key: finite(float(value)) for key, value in (detail or {}).items()},
        )

    def skip(self, state: InterfaceState, reason: str, detail: Optional[Dict[str, float]] = None) -> MonitorRecord:
        logger.debug(f"{self.name} skipped at t = {state.t:.6g}: {reason}")
        return MonitorRecord(
            t=state.t,
            name=self.name,
            status=MonitorStatus.SKIP,
            tolerance=self.tolerance_for(state.grid),
            detail={key: finite(float(value)) for key, value in (detail or {}).items()},
            note=reason,
        )

    def get_monitor_summary(self) -> Dict[str, Any]:
        """Get a summary of the monitor."""
        return {
            "name": self.name,
            "description": self.description,
            "tolerance": self.fixed_tolerance if self.fixed_tolerance is not None else "auto",
        }
