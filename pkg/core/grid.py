"""Sampled interfaces: grids, states, slopes and slope statistics."""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Type

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import gaussian_filter1d

import config
from core.exceptions import GridError, OperatorDomainError, ScenarioError

logger = logging.getLogger(__name__)


class BoundaryMode(str, Enum):
    COMPACT = "compact"
    PERIODIC = "periodic"


class DiffScheme(str, Enum):
    CENTRAL2 = "central2"
    CENTRAL4 = "central4"
    SPECTRAL = "spectral"


class Grid(BaseModel):
    """Uniform grid x_i = x0 + i*dx, i = 0..n-1."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(ge=8)
    dx: PositiveFloat
    x0: float = 0.0
    boundary_mode: BoundaryMode = BoundaryMode.COMPACT
    left_limit: float = 0.0
    right_limit: float = 0.0

    @model_validator(mode="after")
    def _finite(self) -> "Grid":
        values = (self.dx, self.x0, self.left_limit, self.right_limit)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("grid spacing, origin and limits must be finite")
        return self

    @property
    def periodic(self) -> bool:
        return self.boundary_mode is BoundaryMode.PERIODIC

    @property
    def period(self) -> float:
        return self.n * self.dx

    @property
    def span(self) -> float:
        """Length covered by the nodes (one period in periodic mode)."""
        return self.period if self.periodic else (self.n - 1) * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    def with_limits(self, left: float, right: float) -> "Grid":
        return self.model_copy(update={"left_limit": float(left), "right_limit": float(right)})


def _frozen(values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class InterfaceState:
    """Heights f at the grid nodes at time t."""

    grid: Grid
    f: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        f = _frozen(self.f)
        if f.shape != (self.grid.n,):
            raise GridError(f"expected {self.grid.n} heights, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise GridError("interface heights must be finite")
        if not (np.isfinite(self.t) and self.t >= 0):
            raise GridError(f"time must be finite and nonnegative, got {self.t}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "t", float(self.t))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def boundary_drift(self) -> float:
        """Largest mismatch between endpoint heights and the stored limits."""
        if self.grid.periodic:
            return 0.0
        return float(max(abs(self.f[0] - self.grid.left_limit), abs(self.f[-1] - self.grid.right_limit)))

    def replace(self, f: np.ndarray, t: float) -> "InterfaceState":
        return InterfaceState(self.grid, f, t)


def check_boundary(state: InterfaceState, tolerance: Optional[float] = None) -> None:
    """Raise GridError when compact-mode endpoints stray from the stored limits."""
    tol = config.BOUNDARY_TOLERANCE if tolerance is None else tolerance
    drift = state.boundary_drift()
    if drift > tol:
        raise GridError(
            f"endpoint heights differ from the stored limits by {drift:.3e} > {tol:.1e}; "
            "widen the window or adjust the limits"
        )


@dataclass(frozen=True)
class SlopeField:
    grid: Grid
    fx: np.ndarray
    fxx: np.ndarray
    scheme: DiffScheme = DiffScheme.CENTRAL4

    def __post_init__(self):
        fx, fxx = _frozen(self.fx), _frozen(self.fxx)
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fxx))):
            raise GridError("slopes must be finite")
        object.__setattr__(self, "fx", fx)
        object.__setattr__(self, "fxx", fxx)


class EllipticityBounds(BaseModel):
    """Slope statistics and the ellipticity constants they imply."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    beta: float
    slope_sup: float = Field(ge=0)
    lambda_: float = Field(alias="lambda")
    Lambda: float = Field(ge=1)
    sup_fx: float = 0.0
    inf_fx: float = 0.0

    @model_validator(mode="after")
    def _consistent(self) -> "EllipticityBounds":
        if self.beta > self.slope_sup ** 2:
            raise ValueError("beta cannot exceed slope_sup squared")
        if self.lambda_ > self.Lambda:
            raise ValueError("lambda cannot exceed Lambda")
        if self.beta < 1 and self.lambda_ <= 0:
            raise ValueError("beta < 1 requires lambda > 0")
        return self

    @property
    def elliptic(self) -> bool:
        return self.beta < 1


def default_scheme(grid: Grid) -> DiffScheme:
    return DiffScheme.SPECTRAL if grid.periodic else DiffScheme.CENTRAL4


def extended(values: np.ndarray, grid: Grid, width: int, left: float, right: float) -> np.ndarray:
    """Values with ``width`` ghost nodes per side (wrap or constant fill)."""
    if grid.periodic:
        return values[np.arange(-width, grid.n + width) % grid.n]
    return np.concatenate([np.full(width, left), values, np.full(width, right)])


def _stencil(values: np.ndarray, grid: Grid, coeffs: Dict[int, float], left: float, right: float) -> np.ndarray:
    width = max(abs(k) for k in coeffs)
    ext = extended(values, grid, width, left, right)
    out = np.zeros(grid.n)
    for offset, weight in sorted(coeffs.items()):
        out = out + weight * ext[width + offset : width + offset + grid.n]
    return out


_FIRST = {
    DiffScheme.CENTRAL2: {-1: -0.5, 1: 0.5},
    DiffScheme.CENTRAL4: {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12},
}
_SECOND = {
    DiffScheme.CENTRAL2: {-1: 1.0, 0: -2.0, 1: 1.0},
    DiffScheme.CENTRAL4: {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12},
}
_THIRD = {
    DiffScheme.CENTRAL2: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    DiffScheme.CENTRAL4: {-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8},
}


def _spectral(values: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    coeffs = np.fft.rfft(values)
    wavenumber = 2 * np.pi * np.fft.rfftfreq(grid.n, grid.dx)
    symbol = (1j * wavenumber) ** order
    if order % 2 == 1 and grid.n % 2 == 0:
        symbol[-1] = 0.0
    return np.fft.irfft(symbol * coeffs, grid.n)


def _derivative(state: InterfaceState, scheme: DiffScheme, order: int) -> np.ndarray:
    grid = state.grid
    if scheme is DiffScheme.SPECTRAL:
        if not grid.periodic:
            raise OperatorDomainError("spectral differentiation requires periodic boundary mode")
        return _spectral(state.f, grid, order)
    table = {1: _FIRST, 2: _SECOND, 3: _THIRD}[order]
    raw = _stencil(state.f, grid, table[scheme], grid.left_limit, grid.right_limit)
    return raw / grid.dx ** order


def slope(state: InterfaceState, scheme: Optional[DiffScheme] = None) -> SlopeField:
    """First and second derivatives of f by the named scheme."""
    scheme = DiffScheme(scheme) if scheme is not None else default_scheme(state.grid)
    fx = _derivative(state, scheme, 1)
    fxx = _derivative(state, scheme, 2)
    return SlopeField(state.grid, fx, fxx, scheme)


def third_derivative(state: InterfaceState, scheme: Optional[DiffScheme] = None) -> np.ndarray:
    scheme = DiffScheme(scheme) if scheme is not None else default_scheme(state.grid)
    return _derivative(state, scheme, 3)


def beta_of(slopes: SlopeField) -> EllipticityBounds:
    """beta = (max fx)(max -fx) over the nodes, with lambda and Lambda from it."""
    sup_fx = float(np.max(slopes.fx))
    inf_fx = float(np.min(slopes.fx))
    beta = sup_fx * (-inf_fx)
    slope_sup = max(abs(sup_fx), abs(inf_fx))
    Lambda = 1.0 + slope_sup ** 2
    return EllipticityBounds(
        beta=beta,
        slope_sup=slope_sup,
        lambda_=(1.0 - beta) / Lambda ** 2,
        Lambda=Lambda,
        sup_fx=sup_fx,
        inf_fx=inf_fx,
    )


# Scenarios


class GaussianParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    amplitude: float = 1.0
    width: PositiveFloat = 1.0
    center: float = 0.0


class TanhStepParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    amplitude: float = 1.0
    width: PositiveFloat = 1.0
    center: float = 0.0


class TentParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    amplitude: float = 1.0
    width: PositiveFloat = 1.0
    center: float = 0.0


class SineParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    amplitude: float = 1.0
    wavenumber: PositiveFloat = 1.0
    phase: float = 0.0


class TableParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    x: List[float]
    f: List[float]

    @model_validator(mode="after")
    def _table(self) -> "TableParams":
        if len(self.x) != len(self.f) or len(self.x) < 2:
            raise ValueError("custom-table needs matching x and f lists with at least two entries")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("custom-table x must be strictly increasing")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.f))):
            raise ValueError("custom-table entries must be finite")
        return self


def _gaussian(p: GaussianParams, x: np.ndarray) -> np.ndarray:
    return p.amplitude * np.exp(-(((x - p.center) / p.width) ** 2))


def _tanh_step(p: TanhStepParams, x: np.ndarray) -> np.ndarray:
    return p.amplitude * np.tanh((x - p.center) / p.width)


def _tent(p: TentParams, x: np.ndarray) -> np.ndarray:
    return p.amplitude * np.maximum(0.0, 1.0 - np.abs(x - p.center) / p.width)


def _sine(p: SineParams, x: np.ndarray) -> np.ndarray:
    return p.amplitude * np.sin(p.wavenumber * x + p.phase)


def _table(p: TableParams, x: np.ndarray) -> np.ndarray:
    interpolant = PchipInterpolator(p.x, p.f, extrapolate=False)
    values = interpolant(np.clip(x, p.x[0], p.x[-1]))
    return np.where(x < p.x[0], p.f[0], np.where(x > p.x[-1], p.f[-1], values))


@dataclass(frozen=True)
class Scenario:
    params: Type[BaseModel]
    profile: Callable[[Any, np.ndarray], np.ndarray]
    limits: Callable[[Any], Tuple[float, float]]
    periodic_only: bool = False


SCENARIOS: Dict[str, Scenario] = {
    "gaussian": Scenario(GaussianParams, _gaussian, lambda p: (0.0, 0.0)),
    "tanh-step": Scenario(TanhStepParams, _tanh_step, lambda p: (-p.amplitude, p.amplitude)),
    "tent": Scenario(TentParams, _tent, lambda p: (0.0, 0.0)),
    "sine": Scenario(SineParams, _sine, lambda p: (0.0, 0.0), periodic_only=True),
    "custom-table": Scenario(TableParams, _table, lambda p: (p.f[0], p.f[-1])),
}


def validate_scenario(name: str, params: Dict[str, Any], grid: Optional[Grid] = None) -> BaseModel:
    """Parse scenario parameters, raising ScenarioError on any problem."""
    if name not in SCENARIOS:
        raise ScenarioError(f"Scenario '{name}' not available. Available scenarios: {list(SCENARIOS)}")
    entry = SCENARIOS[name]
    try:
        parsed = entry.params.model_validate(params or {})
    except ValidationError as e:
        raise ScenarioError(f"invalid parameters for scenario '{name}': {e}") from e

    if grid is not None and entry.periodic_only:
        if not grid.periodic:
            raise ScenarioError(f"scenario '{name}' requires periodic boundary mode")
        cycles = parsed.wavenumber * grid.period / (2 * np.pi)
        if abs(cycles - round(cycles)) > 1e-9 * max(1.0, cycles):
            raise ScenarioError(
                f"wavenumber {parsed.wavenumber} is not periodic on a period of {grid.period}"
            )
    return parsed


def sample_scenario(
    name: str,
    params: Dict[str, Any],
    grid: Grid,
    mollify: Optional[float] = None,
) -> InterfaceState:
    """Sample a closed-form profile at the grid nodes at t = 0."""
    parsed = validate_scenario(name, params, grid)
    entry = SCENARIOS[name]
    f = entry.profile(parsed, grid.x)

    if mollify is not None:
        if mollify <= 0:
            raise ScenarioError("mollify width must be positive")
        mode = "wrap" if grid.periodic else "nearest"
        f = gaussian_filter1d(f, sigma=mollify / grid.dx, mode=mode)

    if not grid.periodic:
        grid = grid.with_limits(*entry.limits(parsed))

    state = InterfaceState(grid, f, 0.0)
    if not grid.periodic:
        check_boundary(state)
    logger.info(f"Sampled scenario '{name}' on {grid.n} nodes ({grid.boundary_mode.value})")
    return state


def rescale_state(state: InterfaceState, r: float) -> InterfaceState:
    """The natural rescaling r*f(x/r) on the grid scaled by r, at time r*t."""
    if r <= 0:
        raise GridError("rescaling factor must be positive")
    grid = state.grid.model_copy(
        update={
            "dx": state.grid.dx * r,
            "x0": state.grid.x0 * r,
            "left_limit": state.grid.left_limit * r,
            "right_limit": state.grid.right_limit * r,
        }
    )
    return InterfaceState(grid, state.f * r, state.t * r)


# State files


def state_header(state: InterfaceState) -> Dict[str, Any]:
    grid = state.grid
    return {
        "n": grid.n,
        "dx": grid.dx,
        "x0": grid.x0,
        "boundary_mode": grid.boundary_mode.value,
        "t": state.t,
        "left_limit": grid.left_limit,
        "right_limit": grid.right_limit,
    }


def write_state_csv(state: InterfaceState, path: Path) -> Path:
    """One '# {json}' header line, then x,f columns at 17 significant digits."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("# " + json.dumps(state_header(state), sort_keys=True) + "\n")
        frame = pd.DataFrame({"x": state.x, "f": state.f})
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_state_csv(path: Path) -> InterfaceState:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            first = handle.readline()
        if not first.startswith("#"):
            raise GridError(f"{path}: missing JSON header line")
        header = json.loads(first[1:])
        frame = pd.read_csv(path, skiprows=1)
        grid = Grid(
            n=header["n"],
            dx=header["dx"],
            x0=header["x0"],
            boundary_mode=header["boundary_mode"],
            left_limit=header.get("left_limit", 0.0),
            right_limit=header.get("right_limit", 0.0),
        )
        if list(frame.columns) != ["x", "f"]:
            raise GridError(f"{path}: expected columns x,f, got {list(frame.columns)}")
        state = InterfaceState(grid, frame["f"].to_numpy(dtype=float), header["t"])
    except GridError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise GridError(f"{path}: malformed state file ({e})") from e

    logger.debug(f"Read state from {path} (t={state.t}, boundary drift {state.boundary_drift():.3e})")
    return state
