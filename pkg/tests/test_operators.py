"""Test the nonlocal operators and their quadrature."""

import math

import numpy as np
import pytest

import config
from core.exceptions import OperatorDomainError, QuadratureError
from core.grid import Grid, InterfaceState, beta_of, rescale_state, sample_scenario, slope
from core.operators import (
    drift_field,
    drift_integral,
    ft_pointwise,
    kernel_k,
    kernel_K,
    kernel_K_profile,
    kernel_samples,
    kernel_symmetry_split,
    linearized_rhs,
    muskat_rhs,
    muskat_rhs_original,
    slope_rhs,
    slope_rhs_preibp,
)
from core.quadrature import QuadratureSpec, build_lattice


def test_radius_below_ten_cells(compact_grid):
    """A truncation radius under 10 dx cannot be used."""
    with pytest.raises(QuadratureError):
        QuadratureSpec(truncation_radius=0.3).radius(compact_grid)


def test_lattice_offsets_are_positive_and_paired(compact_grid):
    """Offsets are strictly increasing and positive; each is used for +h and -h."""
    lattice = build_lattice(compact_grid, QuadratureSpec())
    assert np.all(lattice.offsets > 0)
    assert np.all(np.diff(lattice.offsets) > 0)
    assert np.all(lattice.weights > 0)


def test_flat_rhs_vanishes(flat_state):
    """f = 0 has a zero right-hand side in every form."""
    np.testing.assert_allclose(muskat_rhs(flat_state), 0.0, atol=1e-14)
    np.testing.assert_allclose(muskat_rhs_original(flat_state), 0.0, atol=1e-14)
    np.testing.assert_allclose(drift_field(flat_state), 0.0, atol=1e-14)
    np.testing.assert_allclose(slope_rhs(flat_state), 0.0, atol=1e-14)


def test_small_sine_decays_at_rate_pi(small_sine_state):
    """For eps sin(x), f_t is -pi eps sin(x) to within one percent."""
    expected = -math.pi * 1e-3 * np.sin(small_sine_state.x)
    rhs = muskat_rhs(small_sine_state)
    assert np.max(np.abs(rhs - expected)) <= 1e-2 * math.pi * 1e-3
    np.testing.assert_allclose(linearized_rhs(small_sine_state), expected, atol=1e-15)


def test_rhs_forms_agree_on_gaussian(gaussian_state):
    """The two forms of the interface equation agree within the quadrature tolerance."""
    difference = muskat_rhs(gaussian_state) - muskat_rhs_original(gaussian_state)
    assert np.max(np.abs(difference)) <= config.QUADRATURE_TOLERANCE


def test_slope_rhs_forms_agree(gaussian_state):
    """Before and after integration by parts the slope equation agrees."""
    dx = gaussian_state.grid.dx
    difference = slope_rhs(gaussian_state) - slope_rhs_preibp(gaussian_state)
    assert np.max(np.abs(difference)) <= max(10 * dx ** 2, 1e-4)


def test_drift_integral_matches_field(gaussian_state):
    """drift_integral at one node is the field value there; it is odd under x -> -x."""
    field = drift_field(gaussian_state)
    assert drift_integral(gaussian_state, 150) == pytest.approx(field[150], rel=1e-12, abs=1e-15)
    np.testing.assert_allclose(field, -field[::-1], atol=1e-10)


def test_kernel_k_flat(flat_state):
    """k(x, s) = 2/s^3 for f = 0, also off the grid."""
    s = np.array([0.013, 0.123, -0.5, 2.0])
    np.testing.assert_allclose(kernel_k(flat_state, 200, s), 2 / s ** 3, rtol=1e-12)


def test_kernel_k_linear(tent_flank_state):
    """k = 2/((1+m^2) s^3) on a linear flank with slope m = 0.1."""
    s = np.array([0.37, -1.3, 4.0])
    values = kernel_k(tent_flank_state, 350, s)
    np.testing.assert_allclose(values, 2 / ((1 + 0.01) * s ** 3), rtol=1e-10)


def test_kernel_k_sign(gaussian_state):
    """sgn(s) k(x, s) > 0 when beta < 1."""
    s = np.concatenate([np.geomspace(0.01, 5, 20), -np.geomspace(0.01, 5, 20)])
    for node in (50, 180, 200, 260):
        assert np.all(np.sign(s) * kernel_k(gaussian_state, node, s) > 0)


def test_kernel_domain_errors(gaussian_state):
    with pytest.raises(OperatorDomainError):
        kernel_k(gaussian_state, 10, 0.0)
    with pytest.raises(OperatorDomainError):
        kernel_K(gaussian_state, 10, 0.0)


def test_kernel_K_flat(flat_state):
    """h^2 K(x, h) = 1 for f = 0."""
    hs = np.array([0.02, 0.1, 0.7, -0.3, -3.0, 9.0])
    np.testing.assert_allclose(hs ** 2 * kernel_K_profile(flat_state, 200, hs), 1.0, atol=1e-6)


def test_kernel_K_linear_without_tail(tent_flank_state):
    """Without a tail K is the integral of k up to R: (1/h^2 - 1/R^2)/(1+m^2)."""
    q = QuadratureSpec(tail_mode="none", truncation_radius=20.0)
    hs = np.array([0.05, 0.3, 1.0, 5.0, -2.0])
    expected = (1 / hs ** 2 - 1 / 20.0 ** 2) / (1 + 0.01)
    np.testing.assert_allclose(kernel_K_profile(tent_flank_state, 350, hs, q), expected, rtol=1e-6)


def test_kernel_K_sandwich(gaussian_state):
    """lambda/h^2 <= K(x, h) <= Lambda/h^2 on the gaussian."""
    bounds = beta_of(slope(gaussian_state))
    hs = np.concatenate([np.geomspace(0.03, 4, 12), -np.geomspace(0.03, 4, 12)])
    for node in (100, 186, 214, 300):
        scaled = hs ** 2 * kernel_K_profile(gaussian_state, node, hs)
        assert np.all(scaled >= bounds.lambda_ * (1 - config.QUADRATURE_TOLERANCE))
        assert np.all(scaled <= bounds.Lambda * (1 + config.QUADRATURE_TOLERANCE))


def test_kernel_symmetry_split(gaussian_state):
    """Even and odd parts recombine to K(h) and K(-h); the odd part is small next to 1/h^2."""
    hs = np.geomspace(0.05, 2.0, 6)
    even, odd = kernel_symmetry_split(gaussian_state, 180, hs)
    np.testing.assert_allclose(even + odd, kernel_K_profile(gaussian_state, 180, hs), rtol=1e-12)
    np.testing.assert_allclose(even - odd, kernel_K_profile(gaussian_state, 180, -hs), rtol=1e-12)
    assert np.all(np.abs(hs * odd) < 10.0)


def test_kernel_samples(gaussian_state):
    """One sample per node and offset, with finite values."""
    samples = kernel_samples(gaussian_state, [100, 200], [0.1, -0.1, 1.0])
    assert len(samples) == 6
    assert {sample.x for sample in samples} == {float(gaussian_state.x[100]), float(gaussian_state.x[200])}
    assert all(math.isfinite(sample.K_value) and math.isfinite(sample.k_value) for sample in samples)


def test_translation_covariance(periodic_grid):
    """Shifting a periodic state by whole cells shifts its right-hand side."""
    state = sample_scenario("sine", {"amplitude": 0.3}, periodic_grid)
    shifted = InterfaceState(periodic_grid, np.roll(state.f, 5))
    np.testing.assert_allclose(muskat_rhs(shifted), np.roll(muskat_rhs(state), 5), rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("r", [2.0, 0.5])
def test_scaling_covariance(gaussian_state, r):
    """r f(x/r) has the same f_t values at corresponding nodes."""
    scaled = rescale_state(gaussian_state, r)
    np.testing.assert_allclose(muskat_rhs(scaled), muskat_rhs(gaussian_state), rtol=1e-9, atol=1e-12)


def test_ft_pointwise_at_nodes(gaussian_state):
    """Off-grid f_t evaluated at grid nodes reproduces muskat_rhs."""
    nodes = gaussian_state.x[100:300:7]
    expected = muskat_rhs(gaussian_state)[100:300:7]
    np.testing.assert_allclose(ft_pointwise(gaussian_state, nodes), expected, rtol=1e-9, atol=1e-12)


def test_ft_pointwise_outside_span(gaussian_state):
    with pytest.raises(OperatorDomainError):
        ft_pointwise(gaussian_state, 11.0)


def test_thread_count_does_not_change_results(gaussian_state, monkeypatch):
    """Node-chunked evaluation is bit-identical for one or many workers."""
    reference = muskat_rhs(gaussian_state)
    monkeypatch.setattr(config, "MUSKAT_THREADS", 1)
    monkeypatch.setattr(config, "NODE_CHUNK", 17)
    np.testing.assert_array_equal(muskat_rhs(gaussian_state), reference)


@pytest.mark.slow
def test_small_sine_fine_grid():
    """At n = 512 the linear decay rate is reproduced to 1e-3."""
    grid = Grid(n=512, dx=2 * math.pi / 512, x0=0.0, boundary_mode="periodic")
    state = sample_scenario("sine", {"amplitude": 1e-3}, grid)
    expected = -math.pi * 1e-3 * np.sin(state.x)
    assert np.max(np.abs(muskat_rhs(state) - expected)) <= 1e-3 * math.pi * 1e-3


def _ibp_discrepancy(state: InterfaceState) -> float:
    """Worst disagreement among slope_rhs, slope_rhs_preibp and D_x(muskat_rhs) on |x| <= 6."""
    scheme = QuadratureSpec().scheme_for(state.grid)
    post, pre = slope_rhs(state), slope_rhs_preibp(state)
    derived = slope(InterfaceState(state.grid, muskat_rhs(state), state.t), scheme).fx
    inner = np.abs(state.x) <= 6.0
    return float(
        max(
            np.max(np.abs(post - pre)[inner]),
            np.max(np.abs(post - derived)[inner]),
            np.max(np.abs(pre - derived)[inner]),
        )
    )


@pytest.mark.slow
@pytest.mark.parametrize(
    "name, params, mollify",
    [("gaussian", {"width": 2.0}, None), ("tent", {"amplitude": 0.5, "width": 2.0}, 0.5)],
)
def test_slope_equation_forms_converge(name, params, mollify):
    """The three forms of (f_x)_t agree to max(10 dx^2, 1e-4) and the gap shrinks 3x when dx halves."""
    gaps = []
    for n, dx in [(121, 0.2), (241, 0.1)]:
        state = sample_scenario(name, params, Grid(n=n, dx=dx, x0=-12.0), mollify)
        gap = _ibp_discrepancy(state)
        assert gap <= max(10 * dx ** 2, 1e-4)
        gaps.append(gap)
    assert gaps[0] >= 3 * gaps[1]
