"""Test grids, states, slopes and scenarios."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.exceptions import GridError, OperatorDomainError, ScenarioError
from core.grid import (
    BoundaryMode,
    DiffScheme,
    Grid,
    InterfaceState,
    beta_of,
    check_boundary,
    read_state_csv,
    rescale_state,
    sample_scenario,
    slope,
    validate_scenario,
    write_state_csv,
)


def test_grid_needs_eight_nodes():
    """Grids with fewer than eight nodes are rejected."""
    with pytest.raises(ValidationError):
        Grid(n=7, dx=0.1)


def test_grid_rejects_nonpositive_spacing():
    """dx must be positive."""
    with pytest.raises(ValidationError):
        Grid(n=16, dx=0.0)


def test_state_shape_and_finiteness(compact_grid):
    """Heights must match the grid and be finite; time must be nonnegative."""
    with pytest.raises(GridError):
        InterfaceState(compact_grid, np.zeros(compact_grid.n - 1))
    bad = np.zeros(compact_grid.n)
    bad[3] = np.nan
    with pytest.raises(GridError):
        InterfaceState(compact_grid, bad)
    with pytest.raises(GridError):
        InterfaceState(compact_grid, np.zeros(compact_grid.n), t=-1.0)


def test_state_is_read_only(gaussian_state):
    """Stored heights cannot be modified in place."""
    with pytest.raises(ValueError):
        gaussian_state.f[0] = 1.0


def test_flat_state_bounds(flat_state):
    """f = 0 gives beta = 0 and lambda = Lambda = 1."""
    bounds = beta_of(slope(flat_state))
    assert bounds.beta == 0.0
    assert bounds.lambda_ == 1.0
    assert bounds.Lambda == 1.0
    assert bounds.elliptic


def test_gaussian_beta(gaussian_state):
    """beta of exp(-x^2) is 2 exp(-1) up to 10 dx^2."""
    bounds = beta_of(slope(gaussian_state))
    assert bounds.beta == pytest.approx(2 * math.exp(-1), abs=10 * gaussian_state.grid.dx ** 2)
    assert bounds.sup_fx == pytest.approx(math.sqrt(2) * math.exp(-0.5), abs=1e-3)
    assert bounds.inf_fx == pytest.approx(-bounds.sup_fx, abs=1e-12)


def test_large_sine_beta(periodic_grid):
    """Amplitude 1.5 gives beta = 2.25 (not elliptic)."""
    state = sample_scenario("sine", {"amplitude": 1.5}, periodic_grid)
    bounds = beta_of(slope(state))
    assert bounds.beta == pytest.approx(2.25, rel=1e-10)
    assert not bounds.elliptic


def test_spectral_needs_periodic(gaussian_state):
    """Spectral differentiation on a compact grid is a domain error."""
    with pytest.raises(OperatorDomainError):
        slope(gaussian_state, DiffScheme.SPECTRAL)


@pytest.mark.parametrize("scheme", [DiffScheme.CENTRAL2, DiffScheme.CENTRAL4, DiffScheme.SPECTRAL])
def test_sine_slopes(periodic_grid, scheme):
    """Slopes of sin(x) approach cos(x) and -sin(x)."""
    state = sample_scenario("sine", {"amplitude": 1.0}, periodic_grid)
    slopes = slope(state, scheme)
    tolerance = {DiffScheme.CENTRAL2: 3e-3, DiffScheme.CENTRAL4: 1e-5, DiffScheme.SPECTRAL: 1e-12}[scheme]
    np.testing.assert_allclose(slopes.fx, np.cos(state.x), atol=tolerance)
    np.testing.assert_allclose(slopes.fxx, -np.sin(state.x), atol=tolerance * 10)


def test_check_boundary(compact_grid):
    """Endpoint heights away from the stored limits are rejected."""
    state = InterfaceState(compact_grid, np.full(compact_grid.n, 0.5))
    with pytest.raises(GridError):
        check_boundary(state)
    check_boundary(state, tolerance=1.0)
    with pytest.raises(GridError):
        sample_scenario("gaussian", {"width": 8.0}, compact_grid)


def test_tanh_step_limits(compact_grid):
    """tanh-step stores its limits and passes the boundary check, also when mollified."""
    for mollify in (None, 0.2):
        state = sample_scenario("tanh-step", {"amplitude": 1.0}, compact_grid, mollify=mollify)
        assert state.grid.left_limit == -1.0
        assert state.grid.right_limit == 1.0
        check_boundary(state)


def test_unknown_scenario():
    """Unknown names list the available scenarios."""
    with pytest.raises(ScenarioError, match="not available"):
        validate_scenario("parabola", {})


def test_scenario_rejects_unknown_parameters():
    with pytest.raises(ScenarioError):
        validate_scenario("gaussian", {"height": 1.0})


def test_sine_requires_periodic_grid(compact_grid, periodic_grid):
    """sine needs periodic mode and a wavenumber periodic on the grid."""
    with pytest.raises(ScenarioError):
        sample_scenario("sine", {}, compact_grid)
    with pytest.raises(ScenarioError):
        sample_scenario("sine", {"wavenumber": 1.5}, periodic_grid)


def test_custom_table(compact_grid):
    """Tables interpolate monotonically and extend by constants."""
    params = {"x": [-2.0, 0.0, 2.0], "f": [0.0, 1.0, 1.0]}
    state = sample_scenario("custom-table", params, compact_grid)
    assert state.f[0] == 0.0
    assert state.f[-1] == 1.0
    assert np.all(np.diff(state.f) >= -1e-15)
    with pytest.raises(ScenarioError):
        validate_scenario("custom-table", {"x": [0.0, 0.0], "f": [1.0, 2.0]})


def test_state_file_round_trip(tmp_path, gaussian_state):
    """State files reproduce heights, grid and time exactly."""
    state = gaussian_state.replace(gaussian_state.f, 0.125)
    path = write_state_csv(state, tmp_path / "state.csv")
    again = read_state_csv(path)
    assert again.grid == state.grid
    assert again.t == state.t
    np.testing.assert_array_equal(again.f, state.f)


def test_malformed_state_file(tmp_path):
    """Missing header or wrong columns raise GridError."""
    path = tmp_path / "bad.csv"
    path.write_text("x,f\n0,0\n", encoding="utf-8")
    with pytest.raises(GridError):
        read_state_csv(path)
    path.write_text('# {"n": 8, "dx": 1.0, "x0": 0.0, "boundary_mode": "compact", "t": 0.0}\na,b\n', encoding="utf-8")
    with pytest.raises(GridError):
        read_state_csv(path)


def test_rescale_state(gaussian_state):
    """r f(x/r) lives on the grid scaled by r, at time r t."""
    state = gaussian_state.replace(gaussian_state.f, 0.5)
    scaled = rescale_state(state, 2.0)
    assert scaled.grid.dx == pytest.approx(2 * state.grid.dx)
    assert scaled.grid.x0 == pytest.approx(2 * state.grid.x0)
    assert scaled.t == pytest.approx(1.0)
    np.testing.assert_allclose(scaled.f, 2 * state.f)
    assert scaled.grid.boundary_mode is BoundaryMode.COMPACT
    with pytest.raises(GridError):
        rescale_state(state, 0.0)
