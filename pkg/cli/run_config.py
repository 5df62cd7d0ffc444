"""Run configuration: one validated block per package, read from a JSON file."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator

import config
from certificates.monitors import MONITORS
from core.exceptions import ConfigError, QuadratureError
from core.grid import Grid, validate_scenario
from core.modulus import ModulusFamily
from core.quadrature import QuadratureSpec
from evolve.stepper import StepperConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DEFAULT_MONITORS = ("max_principle", "ellipticity", "modulus", "curvature", "ft_regularity")


class ScenarioBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    params: Dict[str, Any] = Field(default_factory=dict)
    mollify: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _known(self) -> "ScenarioBlock":
        validate_scenario(self.name, self.params)
        return self


class ModulusBlock(BaseModel):
    """Either ``auto`` (search delta and gamma) or ``explicit`` (take them as given).

    lambda, Lambda and slope_sup default to the values measured on the initial state.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    mode: Literal["auto", "explicit"] = "auto"
    family: ModulusFamily = ModulusFamily.KISELEV
    eps: float = Field(default=1.0, gt=0, le=1)
    A: float = Field(default=config.DEFAULT_MODULUS_A, gt=0)
    delta: Optional[PositiveFloat] = None
    gamma: Optional[PositiveFloat] = None
    M: Optional[float] = Field(default=None, ge=1)
    lambda_: Optional[float] = Field(default=None, gt=0, alias="lambda")
    Lambda: Optional[float] = Field(default=None, gt=0)
    slope_sup: Optional[float] = Field(default=None, ge=0)
    exponents: Tuple[int, int] = (2, 30)
    grid_points: int = Field(default=200, ge=8)
    amplitude: float = Field(default=1.0, gt=0)
    time_offset: float = Field(default=0.0, ge=0)
    compare_unit_lambda: bool = False

    @field_validator("exponents")
    @classmethod
    def _exponent_range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        lo, hi = value
        if lo < 1 or hi < lo:
            raise ValueError(f"exponent range must satisfy 1 <= lo <= hi, got {value}")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "ModulusBlock":
        if self.lambda_ is not None and self.Lambda is not None and self.Lambda < self.lambda_:
            raise ValueError(f"Lambda = {self.Lambda} is below lambda = {self.lambda_}")
        if self.mode == "explicit" and (self.delta is None or self.gamma is None):
            raise ValueError("explicit modulus mode needs delta and gamma")
        return self


class MonitorsBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: List[str] = Field(default_factory=lambda: list(DEFAULT_MONITORS))
    tolerances: Dict[str, float] = Field(default_factory=dict)

    @field_validator("enabled")
    @classmethod
    def _known_monitors(cls, names: List[str]) -> List[str]:
        unknown = [name for name in names if name not in MONITORS]
        if unknown:
            raise ValueError(f"Monitors {unknown} not available. Available monitors: {list(MONITORS)}")
        if len(set(names)) != len(names):
            raise ValueError("monitor names must be unique")
        return names

    @field_validator("tolerances")
    @classmethod
    def _tolerances(cls, values: Dict[str, float]) -> Dict[str, float]:
        for name, value in values.items():
            if name not in MONITORS:
                raise ValueError(f"tolerance given for unknown monitor '{name}'")
            if value < 0:
                raise ValueError(f"tolerance for '{name}' must be non-negative")
        return values


class OutputBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: Path = Path("runs/latest")
    stride: Optional[int] = Field(default=None, ge=1)


class RunConfig(BaseModel):
    """Everything one command needs; blocks a command does not use may be omitted."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    scenario: Optional[ScenarioBlock] = None
    grid: Optional[Grid] = None
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    stepper: Optional[StepperConfig] = None
    modulus: Optional[ModulusBlock] = None
    monitors: MonitorsBlock = Field(default_factory=MonitorsBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def _blocks_agree(self) -> "RunConfig":
        if (self.scenario is None) != (self.grid is None):
            raise ValueError("scenario and grid blocks go together")
        if self.grid is not None:
            validate_scenario(self.scenario.name, self.scenario.params, self.grid)
            try:
                self.quadrature.radius(self.grid)
            except QuadratureError as e:
                raise ValueError(str(e)) from e
        return self

    @property
    def effective_stepper(self) -> StepperConfig:
        if self.stepper is None:
            raise ConfigError("this command needs a stepper block")
        if self.output.stride is None:
            return self.stepper
        return self.stepper.model_copy(update={"output_stride": self.output.stride})

    def to_meta(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


def load_run_config(path: Path) -> RunConfig:
    """Parse and validate a run configuration file (ValidationError on bad content)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read run configuration {path}: {e}") from e
    run_config = RunConfig.model_validate_json(text)
    logger.info(f"Loaded run configuration {path} (schema {run_config.schema_version})")
    return run_config
