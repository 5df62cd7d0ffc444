"""Test the modulus family, its rescaling and the margin machinery."""

import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import optimize

from core.exceptions import ModulusRangeError
from core.modulus import (
    TERM_NAMES,
    MarginBreakdown,
    ModulusFamily,
    ModulusSpec,
    feasibility_search,
    gamma_caps,
    gluing_neighbours,
    inequality_margin,
    inequality_terms,
    omega,
    omega_eps,
    omega_prime,
    omega_second,
    reduced_inequality_margin,
    rescaling_gap,
    rho,
    rho_from_omega,
    rho_prime_zero,
    verification_grid,
)


@pytest.fixture
def spec() -> ModulusSpec:
    return ModulusSpec(delta=2.0 ** -6, gamma=1e-3, slope_sup=0.0)


def test_spec_invariants():
    """gamma < 4 delta, kiselev delta < 4/9, lambda <= Lambda, M >= 32 A S / lambda."""
    with pytest.raises(ValidationError):
        ModulusSpec(delta=0.01, gamma=0.05)
    with pytest.raises(ValidationError):
        ModulusSpec(delta=0.5, gamma=0.01)
    with pytest.raises(ValidationError):
        ModulusSpec(delta=0.01, gamma=0.001, **{"lambda": 2.0}, Lambda=1.0)
    with pytest.raises(ValidationError):
        ModulusSpec(delta=0.01, gamma=0.001, slope_sup=1.0, M=2.0)


def test_spec_json_keeps_infinite_C(spec):
    """C = inf is written as the string 'inf' and read back."""
    data = spec.model_copy(update={"C": math.inf}).model_dump(mode="json", by_alias=True)
    assert data["C"] == "inf"
    assert ModulusSpec.model_validate(data).C == math.inf


def test_omega_branches():
    """Power branch below delta, logarithmic branch above, continuous at delta."""
    s = ModulusSpec(delta=0.1, gamma=0.1)
    assert omega(s, 0.01) == pytest.approx(0.01 - 0.01 ** 1.5, rel=1e-14)
    assert omega(s, 0.0) == 0.0
    w_delta = 0.1 - 0.1 ** 1.5
    assert omega(s, 0.1 * math.e ** 4) == pytest.approx(w_delta + 0.1 * math.log(2.0), rel=1e-12)
    assert omega(s, np.nextafter(0.1, 1.0)) == pytest.approx(w_delta, rel=1e-12)


def test_omega_increasing_and_concave(spec):
    xi = np.geomspace(1e-8, 1e3, 500)
    assert np.all(np.diff(omega(spec, xi)) > 0)
    assert np.all(np.diff(omega_prime(spec, xi)) <= 0)
    assert np.all(omega_second(spec, xi) < 0)


@pytest.mark.parametrize("xi", [1e-3, 0.5, 40.0])
def test_omega_prime_matches_difference_quotient(spec, xi):
    step = 1e-6 * xi
    quotient = (omega(spec, xi + step) - omega(spec, xi - step)) / (2 * step)
    assert omega_prime(spec, xi) == pytest.approx(quotient, rel=1e-6)


def test_omega_domain(spec):
    """Negative arguments and the wrong family are range errors."""
    with pytest.raises(ModulusRangeError):
        omega(spec, -1e-3)
    with pytest.raises(ModulusRangeError):
        omega_eps(spec, 0.1)
    hoelder = ModulusSpec(family=ModulusFamily.HOELDER_EPS, eps=0.5, delta=0.01, gamma=0.001)
    assert omega_eps(hoelder, 0.0025) == pytest.approx(0.05, rel=1e-14)


def test_rho_power_branch_matches_root_finding():
    """For 2S <= omega(delta), C = omega^-1(2S)/(2S) and rho(2S) = 2S."""
    s = ModulusSpec(delta=0.2, gamma=0.1, slope_sup=0.05)
    r = rho_from_omega(s)
    root = optimize.brentq(lambda z: omega(s, z) - 0.1, 1e-12, 0.2, xtol=1e-15, rtol=1e-14)
    assert r.C == pytest.approx(root / 0.1, rel=1e-10)
    assert rho(r, 0.1) == pytest.approx(0.1, rel=1e-10)


def test_rho_log_branch():
    """For 2S above omega(delta), C is large but finite and rho(h) = omega(C h) >= h up to 2S."""
    s = ModulusSpec(delta=0.1, gamma=0.1, slope_sup=0.1)
    r = rho_from_omega(s)
    assert math.isfinite(r.C)
    assert 1e4 < r.C < 1e5
    assert rho(r, 0.2) == pytest.approx(0.2, rel=1e-9)

    hs = np.geomspace(1e-8, 1e-3, 40)
    np.testing.assert_allclose(rho(r, hs), omega(s, r.C * hs), rtol=1e-9)
    grid = np.geomspace(1e-8, 0.2, 200)
    assert np.all(rho(r, grid) >= grid * (1 - 1e-9))


def test_rho_overflowing_C():
    """When C overflows, rho stays finite and exact at the anchor."""
    s = ModulusSpec(delta=2.0 ** -10, gamma=1e-4, slope_sup=1.0)
    r = rho_from_omega(s)
    assert r.C == math.inf
    assert rho(r, 2.0) == pytest.approx(2.0, rel=1e-12)
    assert np.all(np.isfinite(rho(r, np.geomspace(1e-12, 1e3, 50))))
    assert rho_prime_zero(r) == math.inf


def test_rho_with_flat_data(spec):
    """slope_sup = 0 keeps C = 1."""
    r = rho_from_omega(spec)
    assert r.C == 1.0
    assert rho_prime_zero(r) == pytest.approx(1.0)


def test_rho_prime_zero_hoelder():
    hoelder = ModulusSpec(family=ModulusFamily.HOELDER_EPS, eps=0.5, delta=0.01, gamma=0.001)
    assert rho_prime_zero(hoelder) == math.inf


def test_margin_breakdown_is_reproducible():
    """total_margin must equal target minus the sum of the terms."""
    terms = {name: 0.1 for name in TERM_NAMES}
    ok = MarginBreakdown.from_terms(1e-3, 1.0, terms, 1.0)
    assert ok.total_margin == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        MarginBreakdown(xi=1e-3, M=1.0, terms=terms, target=1.0, total_margin=0.6)


def test_terms_structure(spec):
    """Five named terms; the excess term vanishes for M <= 2."""
    breakdown = inequality_terms(spec, spec.delta / 8, M=2.0)
    assert tuple(breakdown.terms) == TERM_NAMES
    assert breakdown.terms["excess_diffusion"] == 0.0
    assert breakdown.terms["near_diffusion"] < 0
    assert breakdown.terms["far_diffusion"] < 0
    assert breakdown.terms["drift"] > 0


def test_inequality_margin_chooses_M(spec):
    """M = 1 up to delta and the large M beyond it."""
    s = spec.model_copy(update={"slope_sup": 1.0, "A": 1.0})
    assert inequality_margin(s, s.delta / 2).M == 1.0
    assert inequality_margin(s, 2 * s.delta).M == pytest.approx(32.0)


def test_margin_finite_next_to_delta(spec):
    """The kink at delta does not break the near-diffusion integral."""
    for xi in (np.nextafter(spec.delta, 0.0), np.nextafter(spec.delta, 1.0)):
        assert math.isfinite(inequality_margin(spec, float(xi)).total_margin)


def test_margin_decreases_with_gamma():
    """For 2 xi <= delta a larger gamma only enlarges the positive terms."""
    delta = 2.0 ** -6
    xi = delta / 4
    margins = [
        inequality_terms(ModulusSpec(delta=delta, gamma=gamma, slope_sup=0.0), xi, M=1.0).total_margin
        for gamma in (1e-4, 1e-3, 1e-2)
    ]
    assert margins[0] >= margins[1] >= margins[2]


def test_margin_monotone_in_lambda_and_A(spec):
    """With M held fixed the margin grows with lambda and shrinks with A."""
    xi = 4 * spec.delta
    by_lambda = [
        inequality_terms(spec.model_copy(update={"lambda_": lam}), xi, M=4.0).total_margin for lam in (0.2, 0.5, 1.0)
    ]
    assert by_lambda[0] <= by_lambda[1] <= by_lambda[2]
    by_A = [inequality_terms(spec.model_copy(update={"A": a}), xi, M=4.0).total_margin for a in (0.5, 1.0, 2.0)]
    assert by_A[0] >= by_A[1] >= by_A[2]


def test_reduced_margin_is_finite(spec):
    for xi in (1e-6, spec.delta / 3, 10 * spec.delta):
        assert math.isfinite(reduced_inequality_margin(spec, xi))
    with pytest.raises(ModulusRangeError):
        reduced_inequality_margin(spec, 0.0)


def test_verification_grid(spec):
    """Log-spaced, sorted, excludes delta itself, contains both neighbours."""
    xis = verification_grid(spec, 50)
    assert np.all(np.diff(xis) > 0)
    assert spec.delta not in xis
    assert np.nextafter(spec.delta, 0.0) in xis
    assert np.nextafter(spec.delta, 1.0) in xis
    assert xis[0] == pytest.approx(1e-6 * spec.delta)
    assert xis[-1] == pytest.approx(1e6 * spec.delta)


@pytest.mark.parametrize("C", [1.0, 0.5, 3.0, 10.0, 0.7])
def test_gluing_neighbours_straddle_delta(spec, C):
    """C*xi falls strictly on each side of delta, and the grid never lands on delta itself."""
    s = spec.model_copy(update={"C": C})
    lower, upper = gluing_neighbours(s)
    assert C * lower < s.delta < C * upper
    xis = verification_grid(s, 51)
    assert lower in xis and upper in xis
    assert not np.any(C * xis == s.delta)


@pytest.mark.parametrize("r", [0.5, 2.0, 3.0, 10.0])
def test_rescaling_covariance(spec, r):
    """margin(omega(r.), xi) = r * margin(omega, r xi), including next to the gluing point."""
    s = spec.model_copy(update={"slope_sup": 1.0, "A": 1.0})
    assert rescaling_gap(s, r) < 1e-6


@pytest.mark.parametrize("r", [3.0, 10.0])
def test_near_diffusion_scales_at_gluing_neighbours(spec, r):
    """Both sides of the identity see the same kink distance, so the near term stays finite and covariant."""
    scaled = spec.model_copy(update={"C": r})
    for xi in gluing_neighbours(scaled):
        direct = inequality_terms(scaled, xi, M=1.0).terms["near_diffusion"]
        reference = inequality_terms(spec, r * xi, M=1.0).terms["near_diffusion"]
        assert math.isfinite(direct)
        assert direct == pytest.approx(r * reference, rel=1e-12)


def test_near_diffusion_below_curvature_bound(spec):
    """The concave-difference integral is <= 0 everywhere and <= xi*omega''(xi) up to delta."""
    for xi in (spec.delta / 100, spec.delta / 8, spec.delta / 3, 0.75 * spec.delta):
        near = inequality_terms(spec, xi, M=1.0).terms["near_diffusion"] / 2
        assert near <= xi * omega_second(spec, xi)
    for xi in (2 * spec.delta, 50 * spec.delta):
        assert inequality_terms(spec, xi, M=1.0).terms["near_diffusion"] <= 0


def test_far_diffusion_bound_beyond_delta(spec):
    """For xi >= delta and small gamma the far term is <= -(3/4) * 2 lambda omega(xi)/xi."""
    for xi in (1.5 * spec.delta, 4 * spec.delta, 100 * spec.delta):
        far = inequality_terms(spec, xi, M=1.0).terms["far_diffusion"]
        assert far <= -0.75 * 2 * spec.lambda_ * omega(spec, xi) / xi


def test_gamma_caps_present_only_when_relevant():
    caps = gamma_caps(ModulusFamily.KISELEV, 2.0 ** -6, 1.0, 1.0, 1.0, 1.0, 0.0)
    assert set(caps) == {"gamma_below_4delta", "concavity", "final"}
    caps = gamma_caps(ModulusFamily.KISELEV, 2.0 ** -6, 1.0, 1.0, 0.5, 2.0, 1.0)
    assert {"anisotropy", "far_field", "log_M"} <= set(caps)


def test_feasibility_rejects_nonelliptic_input():
    with pytest.raises(ModulusRangeError):
        feasibility_search(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ModulusRangeError):
        feasibility_search(1.0, 1.0, 0.5, 1.0)


def test_feasibility_unit_case():
    """A = lambda = Lambda = slope_sup = 1 admits a modulus on a short dyadic range."""
    result = feasibility_search(1.0, 1.0, 1.0, 1.0, exponents=(5, 8), grid_points=30)
    assert result.feasible
    found = result.spec
    assert found.gamma < 4 * found.delta
    assert found.M == pytest.approx(32.0)
    for xi in verification_grid(found, 30):
        assert inequality_margin(found, float(xi)).total_margin > 0
    assert any(step.status == "feasible" for step in result.trace)


def test_feasibility_reports_infeasible():
    """A huge drift constant leaves no admissible gamma."""
    result = feasibility_search(1e6, 1.0, 1.0, 1.0, exponents=(3, 4), grid_points=20)
    assert not result.feasible
    assert result.spec is None
    assert result.report.binding_constraint == "margin"
    assert result.report.deltas_tried == 2


@pytest.mark.slow
def test_feasibility_small_lambda_needs_smaller_gamma():
    """Near beta = 1 the admissible gamma shrinks by orders of magnitude."""
    unit = feasibility_search(1.0, 1.0, 1.0, 1.0)
    small = feasibility_search(1.0, 1e-6, 1.0, 1.0, exponents=(2, 60))
    assert unit.feasible and small.feasible
    assert small.spec.gamma < 1e-3 * unit.spec.gamma
