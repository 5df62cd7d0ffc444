"""Shared fixtures: grids, sampled scenarios and quadrature settings."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from core.grid import BoundaryMode, Grid, InterfaceState, sample_scenario
from core.quadrature import QuadratureSpec


@pytest.fixture
def compact_grid() -> Grid:
    """[-10, 10] with dx = 0.05."""
    return Grid(n=401, dx=0.05, x0=-10.0)


@pytest.fixture
def periodic_grid() -> Grid:
    """One period of 2*pi on 64 nodes."""
    return Grid(n=64, dx=2 * math.pi / 64, x0=0.0, boundary_mode=BoundaryMode.PERIODIC)


@pytest.fixture
def flat_state(compact_grid) -> InterfaceState:
    return InterfaceState(compact_grid, np.zeros(compact_grid.n))


@pytest.fixture
def gaussian_state(compact_grid) -> InterfaceState:
    return sample_scenario("gaussian", {"amplitude": 1.0, "width": 1.0}, compact_grid)


@pytest.fixture
def small_sine_state(periodic_grid) -> InterfaceState:
    return sample_scenario("sine", {"amplitude": 1e-3}, periodic_grid)


@pytest.fixture
def tent_flank_state() -> InterfaceState:
    """Tent of half-width 50 and height 5: slope 0.1 on (-50, 0)."""
    grid = Grid(n=1201, dx=0.1, x0=-60.0)
    return sample_scenario("tent", {"amplitude": 5.0, "width": 50.0}, grid)


@pytest.fixture
def default_quadrature() -> QuadratureSpec:
    return QuadratureSpec()


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration dict to a JSON file; output goes under tmp_path."""

    def _write(data: dict, name: str = "run.json") -> Path:
        data = dict(data)
        data.setdefault("output", {"directory": str(tmp_path / "out")})
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
