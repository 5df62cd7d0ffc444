"""Offset lattices and interpolation used by the nonlocal integrals.

Every integral over h is evaluated on a symmetric lattice: each positive
offset u carries a weight w and is always combined with its mirror -u before
summation.  Offsets are stored relative to the node index, so shifting the
data by whole cells shifts the results by the same number of cells.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat
from scipy import special

from core.exceptions import QuadratureError
from core.grid import DiffScheme, Grid, default_scheme, extended

logger = logging.getLogger(__name__)

# Offsets below this many cells are sampled on the refined lattice.
REFINED_CELLS = 4

GAUSS_POINTS = 10


class InnerRule(str, Enum):
    SYMMETRIC_MIDPOINT = "symmetric-midpoint"
    SYMMETRIC_TRAPEZOID = "symmetric-trapezoid"


class CenterTreatment(str, Enum):
    TAYLOR_LIMIT = "taylor-limit"
    SKIP = "skip"


class TailMode(str, Enum):
    ANALYTIC = "analytic-constant-tail"
    NONE = "none"


class QuadratureSpec(BaseModel):
    """How the integrals over h are discretized."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    inner_rule: InnerRule = InnerRule.SYMMETRIC_TRAPEZOID
    truncation_radius: Optional[PositiveFloat] = None
    center_cell_treatment: CenterTreatment = CenterTreatment.TAYLOR_LIMIT
    tail_mode: TailMode = TailMode.ANALYTIC
    refinement: int = Field(default=4, ge=1)
    derivative_scheme: Optional[DiffScheme] = None

    @property
    def analytic_tail(self) -> bool:
        return self.tail_mode is TailMode.ANALYTIC

    @property
    def taylor_center(self) -> bool:
        return self.center_cell_treatment is CenterTreatment.TAYLOR_LIMIT

    def radius(self, grid: Grid) -> float:
        """Truncation radius R for ``grid`` (half the span unless set)."""
        radius = self.truncation_radius if self.truncation_radius is not None else grid.span / 2
        if radius < 10 * grid.dx * (1 - 1e-12):
            raise QuadratureError(
                f"truncation radius {radius:g} is below 10*dx = {10 * grid.dx:g}", integral="lattice"
            )
        return radius

    def scheme_for(self, grid: Grid) -> DiffScheme:
        return self.derivative_scheme if self.derivative_scheme is not None else default_scheme(grid)

    def describe(self, grid: Grid) -> dict:
        """JSON-ready record of the spec as applied to ``grid``."""
        data = self.model_dump(mode="json")
        data["effective_radius"] = self.radius(grid)
        data["effective_scheme"] = self.scheme_for(grid).value
        return data


@dataclass(frozen=True)
class OffsetLattice:
    """Positive offsets u = (base + theta)*dx with weights for the pair sums."""

    dx: float
    offsets: np.ndarray
    weights: np.ndarray
    base: np.ndarray
    theta: np.ndarray
    center_weight: float
    tail_start: float
    folded: bool
    period: float

    @property
    def reach(self) -> int:
        """Cells spanned by the largest offset, rounded up."""
        return int(self.base[-1]) + 1

    @property
    def end(self) -> float:
        return float(self.offsets[-1])


def build_lattice(grid: Grid, spec: QuadratureSpec, unfold: bool = False) -> OffsetLattice:
    """Offset lattice for ``grid``.

    Periodic grids with the analytic tail are folded onto one period (the
    integrands are then summed over all periodic images in closed form)
    unless ``unfold`` is set, in which case the lattice covers several
    periods and a leading-order far-field tail is used instead.
    """
    radius = spec.radius(grid)
    dx, n, r = grid.dx, grid.n, spec.refinement
    folded = grid.periodic and spec.analytic_tail and not unfold

    if folded:
        reach = n // 2
    elif not spec.analytic_tail:
        reach = int(np.floor(radius / dx + 1e-9))
    elif grid.periodic:
        periods = int(np.ceil(max(radius, 4 * grid.period) / grid.period - 1e-12))
        reach = n * periods
    else:
        reach = max(int(np.ceil(radius / dx - 1e-9)), n - 1)

    refined = min(REFINED_CELLS, reach - 1)
    eta = dx / r

    steps = np.arange(1, refined * r + 1)
    fine_offsets = steps * eta
    fine_weights = np.full(steps.size, eta)
    fine_weights[-1] = (eta + dx) / 2

    cells = np.arange(refined + 1, reach + 1)
    coarse_offsets = cells * dx
    coarse_weights = np.full(cells.size, dx)

    if folded:
        if n % 2 == 0:
            coarse_weights[-1] = dx / 2
        tail_start = np.inf
    elif spec.inner_rule is InnerRule.SYMMETRIC_TRAPEZOID:
        coarse_weights[-1] = dx / 2
        tail_start = reach * dx
    else:
        tail_start = (reach + 0.5) * dx

    lattice = OffsetLattice(
        dx=dx,
        offsets=np.concatenate([fine_offsets, coarse_offsets]),
        weights=np.concatenate([fine_weights, coarse_weights]),
        base=np.concatenate([steps // r, cells]).astype(int),
        theta=np.concatenate([(steps % r) / r, np.zeros(cells.size)]),
        center_weight=eta,
        tail_start=tail_start,
        folded=folded,
        period=grid.period,
    )
    logger.debug(
        f"Lattice: {lattice.offsets.size} offsets, reach {reach} cells, "
        f"{'folded' if folded else 'unfolded'}, tail from {tail_start:g}"
    )
    return lattice


def hermite(v0, d0, v1, d1, t, h):
    """Cubic Hermite interpolant on a cell of width h at fraction t."""
    t2 = t * t
    t3 = t2 * t
    return (
        (2 * t3 - 3 * t2 + 1) * v0
        + (t3 - 2 * t2 + t) * h * d0
        + (-2 * t3 + 3 * t2) * v1
        + (t3 - t2) * h * d1
    )


@dataclass(frozen=True)
class PaddedField:
    """Node values and derivatives with ghost cells on both sides."""

    values: np.ndarray
    slopes: np.ndarray
    pad: int
    dx: float
    wrap: int = 0

    @classmethod
    def build(
        cls,
        grid: Grid,
        values: np.ndarray,
        slopes: np.ndarray,
        pad: int,
        left: float,
        right: float,
    ) -> "PaddedField":
        return cls(
            values=extended(values, grid, pad, left, right),
            slopes=extended(slopes, grid, pad, 0.0, 0.0),
            pad=pad,
            dx=grid.dx,
            wrap=grid.n if grid.periodic else 0,
        )

    def _cell(self, lo: np.ndarray, t: np.ndarray) -> np.ndarray:
        i = lo + self.pad
        return hermite(self.values[i], self.slopes[i], self.values[i + 1], self.slopes[i + 1], t, self.dx)

    def on_lattice(self, nodes: np.ndarray, lattice: OffsetLattice, sign: int) -> np.ndarray:
        """Values at x_i + sign*u for every node i (rows) and offset u (columns)."""
        nodes = nodes[:, None]
        if sign > 0:
            lo = nodes + lattice.base[None, :]
            t = np.broadcast_to(lattice.theta, lo.shape)
        else:
            inner = lattice.theta > 0
            lo = nodes - lattice.base[None, :] - inner[None, :].astype(int)
            t = np.broadcast_to(np.where(inner, 1.0 - lattice.theta, 0.0), lo.shape)
        return self._cell(lo, t)

    def at(self, positions: np.ndarray) -> np.ndarray:
        """Values at fractional index positions (node i sits at position i)."""
        positions = np.asarray(positions, dtype=float)
        if self.wrap:
            positions = np.mod(positions, self.wrap)
        lo = np.floor(positions).astype(int)
        lo = np.clip(lo, -self.pad, self.values.size - self.pad - 2)
        return self._cell(lo, positions - lo)


def gauss_legendre():
    """Nodes and weights of the panel rule on [-1, 1]."""
    return special.roots_legendre(GAUSS_POINTS)


def graded_breakpoints(requested: np.ndarray, dx: float, end: float) -> np.ndarray:
    """Panel breakpoints: cell multiples up to ``end``, halving below dx, plus ``requested``.

    Adjacent breakpoints differ by at most a factor two below dx.
    """
    lowest = float(np.min(requested)) if requested.size else end
    cells = dx * np.arange(1, int(round(end / dx)) + 1)
    halvings = int(np.ceil(np.log2(dx / lowest))) if lowest < dx else 0
    graded = dx * 2.0 ** -np.arange(1, halvings + 1)
    points = np.unique(np.concatenate([requested, graded, cells]))
    return points[(points >= lowest) & (points <= end)]
