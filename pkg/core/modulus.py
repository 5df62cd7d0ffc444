"""Moduli of continuity, the generated modulus rho, and the inequality margins they must satisfy."""

import functools
import logging
import math
import sys
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator
from scipy import integrate, optimize, special

from core.exceptions import ModulusRangeError, QuadratureError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

SWITCH_FACTOR = 1e3
TAYLOR_FRACTION = 1e-3
ROUNDOFF_FRACTION = 1e-8
PANEL_RATIO = 10.0
BISECTION_STEPS = 11


class ModulusFamily(str, Enum):
    KISELEV = "kiselev"
    HOELDER_EPS = "hoelder-eps"


def _parse_float(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return float("inf")
    return value


class ModulusSpec(BaseModel):
    """Parameters of omega, of its rescaling rho(h) = omega(C h), and of the inequality they enter."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    family: ModulusFamily = ModulusFamily.KISELEV
    delta: float = Field(gt=0)
    gamma: float = Field(gt=0)
    eps: float = Field(default=1.0, gt=0, le=1)
    C: float = Field(default=1.0, gt=0)
    anchor: Optional[float] = Field(default=None, ge=0)
    amplitude: float = Field(default=1.0, gt=0)
    slope_sup: float = Field(default=1.0, ge=0)
    A: float = Field(default=1.0, gt=0)
    M: Optional[float] = Field(default=None, ge=1)
    lambda_: float = Field(default=1.0, gt=0, alias="lambda")
    Lambda: float = Field(default=1.0, gt=0)

    @field_validator("C", mode="before")
    @classmethod
    def _infinite_C(cls, value: Any) -> Any:
        return _parse_float(value)

    @field_serializer("C", when_used="json")
    def _write_C(self, value: float) -> Any:
        return "inf" if math.isinf(value) else value

    @model_validator(mode="after")
    def _invariants(self) -> "ModulusSpec":
        if self.family is ModulusFamily.KISELEV and self.delta >= 4 / 9:
            raise ValueError("kiselev modulus needs delta < 4/9 so that omega is increasing")
        if self.gamma >= 4 * self.delta:
            raise ValueError(f"gamma = {self.gamma:g} must be below 4*delta = {4 * self.delta:g}")
        if self.gamma > concavity_cap(self.family, self.delta, self.eps) * (1 + 1e-12):
            raise ValueError("gamma too large: omega' would increase across delta")
        if self.lambda_ > self.Lambda:
            raise ValueError("lambda cannot exceed Lambda")
        if self.M is not None and self.M < default_M(self.A, self.slope_sup, self.lambda_) * (1 - 1e-12):
            raise ValueError("M must be at least 32*A*slope_sup/lambda")
        return self

    @property
    def omega_delta(self) -> float:
        return _base_power(self.family, self.eps, self.delta)

    @property
    def delta_eff(self) -> float:
        """Gluing point of the rescaled profile omega(C x)."""
        return self.delta / self.C

    @property
    def large_M(self) -> float:
        return self.M if self.M is not None else default_M(self.A, self.slope_sup, self.lambda_)


def default_M(A: float, slope_sup: float, lambda_: float) -> float:
    return max(1.0, 32 * A * slope_sup / lambda_)


def concavity_cap(family: ModulusFamily, delta: float, eps: float = 1.0) -> float:
    """Largest gamma keeping omega' non-increasing across delta."""
    if family is ModulusFamily.KISELEV:
        return 4 * delta * (1 - 1.5 * math.sqrt(delta))
    return 4 * eps * delta ** eps


def _base_power(family: ModulusFamily, eps: float, x: float) -> float:
    if family is ModulusFamily.KISELEV:
        return x - x ** 1.5
    return x ** eps


class ModulusProfile:
    """Scalar evaluation of amplitude * omega(C x) and of its closed-form integrals."""

    def __init__(self, spec: ModulusSpec):
        if not math.isfinite(spec.C):
            raise ModulusRangeError("profile evaluation needs a finite rescaling constant C")
        self.spec = spec
        self.family = spec.family
        self.eps = spec.eps
        self.delta = spec.delta
        self.gamma = spec.gamma
        self.C = spec.C
        self.amp = spec.amplitude
        self.omega_delta = spec.omega_delta

    # base modulus

    def base(self, x: float) -> float:
        if x <= self.delta:
            return _base_power(self.family, self.eps, x)
        return self.omega_delta + self.gamma * math.log1p(math.log(x / self.delta) / 4)

    def base_prime(self, x: float) -> float:
        if x <= self.delta:
            if self.family is ModulusFamily.KISELEV:
                return 1 - 1.5 * math.sqrt(x)
            return math.inf if x == 0 and self.eps < 1 else self.eps * x ** (self.eps - 1)
        return self.gamma / (x * (4 + math.log(x / self.delta)))

    def base_second(self, x: float) -> float:
        if x <= self.delta:
            if x == 0:
                return -math.inf
            if self.family is ModulusFamily.KISELEV:
                return -0.75 / math.sqrt(x)
            return self.eps * (self.eps - 1) * x ** (self.eps - 2)
        ell = math.log(x / self.delta)
        return -self.gamma * (5 + ell) / (x ** 2 * (4 + ell) ** 2)

    def base_inner(self, x: float) -> float:
        """Integral of omega(h)/h over (0, x)."""
        delta = self.delta
        if x <= delta:
            return self._inner_power(x)
        T = math.log(x / delta)
        return (
            self._inner_power(delta)
            + self.omega_delta * T
            + self.gamma * ((4 + T) * math.log1p(T / 4) - T)
        )

    def _inner_power(self, x: float) -> float:
        if self.family is ModulusFamily.KISELEV:
            return x - (2.0 / 3.0) * x ** 1.5
        return x ** self.eps / self.eps

    def base_outer(self, X: float) -> float:
        """Integral of omega(h)/h^2 over (X, infinity)."""
        delta = self.delta
        if X >= delta:
            z = 4 + math.log(X / delta)
            return self.base(X) / X + self.gamma * _scaled_exp1(z) / X
        if self.family is ModulusFamily.KISELEV:
            power = math.log(delta / X) - 2 * (math.sqrt(delta) - math.sqrt(X))
        elif self.eps < 1:
            power = (X ** (self.eps - 1) - delta ** (self.eps - 1)) / (1 - self.eps)
        else:
            power = math.log(delta / X)
        return power + self.base_outer(delta)

    # rescaled profile

    def value(self, x: float) -> float:
        return self.amp * self.base(self.C * x)

    def prime(self, x: float) -> float:
        return self.amp * self.C * self.base_prime(self.C * x)

    def second(self, x: float) -> float:
        return self.amp * self.C ** 2 * self.base_second(self.C * x)

    def inner(self, x: float) -> float:
        return self.amp * self.base_inner(self.C * x)

    def outer(self, X: float) -> float:
        return self.amp * self.C * self.base_outer(self.C * X)


def _scaled_exp1(z: float) -> float:
    """exp(z) * E1(z) without overflow."""
    if z < 50:
        return math.exp(z) * float(special.exp1(z))
    return (1 - 1 / z + 2 / z ** 2 - 6 / z ** 3) / z


# Vectorized evaluation of the base modulus


def _check_xi(xi: np.ndarray) -> None:
    if np.any(xi < 0) or np.any(np.isnan(xi)):
        raise ModulusRangeError("modulus argument must be nonnegative")


def _evaluate(spec: ModulusSpec, xi: ArrayLike, order: int) -> Union[float, np.ndarray]:
    values = np.asarray(xi, dtype=float)
    _check_xi(values)
    delta, gamma = spec.delta, spec.gamma
    kiselev = spec.family is ModulusFamily.KISELEV
    eps = spec.eps
    low = values <= delta
    ell = np.log(np.maximum(values, delta) / delta)

    with np.errstate(divide="ignore", invalid="ignore"):
        if order == 0:
            power = values - values ** 1.5 if kiselev else values ** eps
            upper = spec.omega_delta + gamma * np.log1p(ell / 4)
        elif order == 1:
            power = 1 - 1.5 * np.sqrt(values) if kiselev else eps * values ** (eps - 1)
            upper = gamma / (np.maximum(values, delta) * (4 + ell))
        else:
            power = -0.75 / np.sqrt(values) if kiselev else eps * (eps - 1) * values ** (eps - 2)
            upper = -gamma * (5 + ell) / (np.maximum(values, delta) ** 2 * (4 + ell) ** 2)
    out = np.where(low, power, upper)
    return float(out) if out.ndim == 0 else out


def omega(spec: ModulusSpec, xi: ArrayLike) -> Union[float, np.ndarray]:
    """omega(xi): power branch up to delta, then omega(delta) + gamma*ln(1 + ln(xi/delta)/4)."""
    return _evaluate(spec, xi, 0)


def omega_eps(spec: ModulusSpec, xi: ArrayLike) -> Union[float, np.ndarray]:
    """The C^{1,eps} family: xi^eps up to delta, same logarithmic branch beyond."""
    if spec.family is not ModulusFamily.HOELDER_EPS:
        raise ModulusRangeError(f"omega_eps needs family 'hoelder-eps', got '{spec.family.value}'")
    return _evaluate(spec, xi, 0)


def omega_prime(spec: ModulusSpec, xi: ArrayLike) -> Union[float, np.ndarray]:
    return _evaluate(spec, xi, 1)


def omega_second(spec: ModulusSpec, xi: ArrayLike) -> Union[float, np.ndarray]:
    return _evaluate(spec, xi, 2)


# Rescaling to rho


def _log_C(spec: ModulusSpec) -> float:
    if spec.anchor is not None and spec.anchor > spec.omega_delta:
        psi = (spec.anchor - spec.omega_delta) / spec.gamma
        if psi > 700:
            return math.inf
        return math.log(spec.delta) + 4 * math.expm1(psi) - math.log(spec.anchor)
    return math.log(spec.C)


def rho_from_omega(spec: ModulusSpec) -> ModulusSpec:
    """Set C = omega^{-1}(2 slope_sup) / (2 slope_sup), so rho(h) = omega(C h) >= h below rho^{-1}(2 slope_sup)."""
    target = 2 * spec.slope_sup
    if not math.isfinite(target):
        raise ModulusRangeError("slope_sup must be finite")
    if target == 0:
        logger.warning("slope_sup is 0; rho is taken as omega itself (C = 1)")
        return spec.model_copy(update={"C": 1.0, "anchor": None})

    if target <= spec.omega_delta:
        profile = ModulusProfile(spec.model_copy(update={"C": 1.0, "amplitude": 1.0}))
        root = optimize.bisect(
            lambda z: profile.base(z) - target, 0.0, spec.delta, xtol=1e-300, rtol=4 * sys.float_info.epsilon, maxiter=2000
        )
        C = root / target
    else:
        psi = (target - spec.omega_delta) / spec.gamma
        log_C = (
            math.inf
            if psi > 700
            else math.log(spec.delta) + 4 * math.expm1(psi) - math.log(target)
        )
        C = math.exp(log_C) if log_C < 709 else math.inf
        logger.debug(f"rho anchor: psi = {psi:.6g}, log C = {log_C:.6g}")

    logger.info(f"rho constructed with C = {C:.6g} (slope_sup {spec.slope_sup:.6g})")
    return spec.model_copy(update={"C": C, "anchor": target})


def rho(spec: ModulusSpec, h: ArrayLike) -> Union[float, np.ndarray]:
    """rho(h) = amplitude * omega(C h), stable when C overflows double precision."""
    values = np.asarray(h, dtype=float)
    _check_xi(values)
    log_C = _log_C(spec)
    anchored = spec.anchor is not None and spec.anchor > spec.omega_delta
    flat = np.atleast_1d(values)
    out = np.zeros(flat.shape)
    positive = flat > 0

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_h = np.log(np.where(positive, flat, 1.0))
        log_arg = log_C + log_h
        in_log_branch = positive & (log_arg > math.log(spec.delta))
        if anchored:
            shift = np.exp(-(spec.anchor - spec.omega_delta) / spec.gamma) * (log_h - math.log(spec.anchor)) / 4
            upper = spec.anchor + spec.gamma * np.log1p(np.maximum(shift, -1 + 1e-300))
        else:
            upper = spec.omega_delta + spec.gamma * np.log1p((log_arg - math.log(spec.delta)) / 4)
        scaled = np.exp(np.minimum(log_arg, math.log(spec.delta)))
        if spec.family is ModulusFamily.KISELEV:
            power = scaled - scaled ** 1.5
        else:
            power = scaled ** spec.eps

    out = np.where(in_log_branch, upper, np.where(positive, power, 0.0)) * spec.amplitude
    return float(out[0]) if values.ndim == 0 else out.reshape(values.shape)


def rho_prime_zero(spec: ModulusSpec) -> float:
    """rho'(0) = amplitude * C * omega'(0); infinite for eps < 1 or overflowing C."""
    if spec.family is ModulusFamily.HOELDER_EPS and spec.eps < 1:
        return math.inf
    log_C = _log_C(spec)
    if log_C >= 709:
        return math.inf
    return spec.amplitude * math.exp(log_C)


# Inequality terms


class MarginBreakdown(BaseModel):
    """The five right-hand-side terms at xi, the target -omega' omega, and their difference."""

    model_config = ConfigDict(frozen=True)

    xi: float
    M: float
    terms: Dict[str, float]
    target: float
    total_margin: float

    @model_validator(mode="after")
    def _reproducible(self) -> "MarginBreakdown":
        expected = self.target - math.fsum(self.terms.values())
        scale = max(abs(self.target), *(abs(v) for v in self.terms.values()), 1e-300)
        if abs(expected - self.total_margin) > 1e-12 * scale:
            raise ValueError("total_margin does not match target minus the sum of terms")
        return self

    @classmethod
    def from_terms(cls, xi: float, M: float, terms: Dict[str, float], target: float) -> "MarginBreakdown":
        return cls(xi=xi, M=M, terms=terms, target=target, total_margin=target - math.fsum(terms.values()))


TERM_NAMES = ("drift", "far_field", "excess_diffusion", "near_diffusion", "far_diffusion")


def _panels(lo: float, hi: float, extra: Sequence[float] = ()) -> List[float]:
    points = [lo]
    while points[-1] * PANEL_RATIO < hi:
        points.append(points[-1] * PANEL_RATIO)
    points.append(hi)
    points.extend(p for p in extra if lo < p < hi)
    return sorted(set(points))


def _integrate(fn, points: Sequence[float], name: str) -> float:
    total = 0.0
    for lo, hi in zip(points[:-1], points[1:]):
        out = integrate.quad(fn, lo, hi, limit=200, epsabs=0.0, epsrel=1e-10, full_output=1)
        value, error = out[0], out[1]
        if not math.isfinite(value) or (len(out) > 3 and error > 1e-6 * max(abs(value), 1e-300)):
            raise QuadratureError(
                f"{name} integral did not converge on [{lo:.6g}, {hi:.6g}]: {value:.6g} +- {error:.3g}",
                integral=name,
            )
        total += value
    return total


@functools.lru_cache(maxsize=64)
def _power_second_difference(eps: float) -> float:
    """Integral over (0, 1) of ((1+s)^eps + (1-s)^eps - 2)/s^2."""
    if eps == 1.0:
        return 0.0
    cut = 1e-3

    def integrand(s: float) -> float:
        return ((1 + s) ** eps + (1 - s) ** eps - 2) / s ** 2

    series = eps * (eps - 1) * (cut + (eps - 2) * (eps - 3) * cut ** 3 / 36)
    return series + _integrate(integrand, [cut, 0.1, 0.5, 1.0], "power-second-difference")


def _kiselev_second_difference() -> float:
    """Integral over (0, 1) of ((1+s)^1.5 + (1-s)^1.5 - 2)/s^2, in closed form."""
    return -(2 ** 1.5 - 2) + 1.5 * (2 * math.sqrt(2) + 2 * math.log(math.sqrt(2) - 1))


def _near_diffusion(profile: ModulusProfile, xi: float) -> float:
    """Integral over (0, xi) of (omega(xi+h) + omega(xi-h) - 2 omega(xi))/h^2.

    Evaluated in base coordinates at X = C*xi, which scales the integral by amplitude*C.
    """
    X = profile.C * xi
    delta = profile.delta
    scale = profile.amp * profile.C
    if 2 * X <= delta:
        if profile.family is ModulusFamily.KISELEV:
            return -scale * math.sqrt(X) * _kiselev_second_difference()
        eps = profile.eps
        return scale * X ** (eps - 1) * _power_second_difference(eps)

    kink = abs(X - delta)
    if kink == 0:
        return -math.inf
    w_X = profile.base(X)

    def integrand(u: float) -> float:
        return (profile.base(X + u) + profile.base(X - u) - 2 * w_X) / u ** 2

    start = ROUNDOFF_FRACTION * X
    if kink < start:
        # Past the kink the second difference is (omega'(delta+) - omega'(delta-)) * (u - kink) to leading order.
        jump = profile.gamma / (4 * delta) - profile.base_prime(delta)
        near = profile.base_second(X) * kink + jump * (math.log(start / kink) - 1 + kink / start)
    else:
        start = min(TAYLOR_FRACTION * X, kink)
        near = profile.base_second(X) * start
    return scale * (near + _integrate(integrand, _panels(start, X, [kink]), "near-diffusion"))


def _far_diffusion(profile: ModulusProfile, xi: float) -> float:
    """Integral over (xi, infinity) of (omega(h+xi) - omega(h) - omega(xi))/h^2, in base coordinates."""
    X = profile.C * xi
    delta = profile.delta
    T = SWITCH_FACTOR * max(X, delta)
    w_X = profile.base(X)

    def integrand(u: float) -> float:
        return (profile.base(u + X) - profile.base(u) - w_X) / u ** 2

    body = _integrate(integrand, _panels(X, T, [delta - X, delta]), "far-diffusion")
    tail = -w_X / T + X * profile.gamma / (2 * T ** 2 * (4 + math.log(T / delta)))
    return profile.amp * profile.C * (body + tail)


def _excess_diffusion(profile: ModulusProfile, xi: float, M: float) -> float:
    """Integral over (xi, M xi) of (omega(h-xi) - omega(xi))_+/h^2; the positive part starts at 2 xi."""
    if M <= 2:
        return 0.0
    X = profile.C * xi
    w_X = profile.base(X)

    def integrand(u: float) -> float:
        return (profile.base(u - X) - w_X) / u ** 2

    body = _integrate(integrand, _panels(2 * X, M * X, [profile.delta + X]), "excess-diffusion")
    return profile.amp * profile.C * body


def inequality_terms(spec: ModulusSpec, xi: float, M: Optional[float] = None) -> MarginBreakdown:
    """All five terms of the modulus bound at separation xi for a given M >= 1."""
    if not xi > 0:
        raise ModulusRangeError(f"xi must be positive, got {xi}")
    M = float(M if M is not None else (spec.M or 1.0))
    if M < 1:
        raise ModulusRangeError("M must be >= 1")

    profile = ModulusProfile(spec)
    w = profile.value(xi)
    w_prime = profile.prime(xi)
    lam, Lam, A = spec.lambda_, spec.Lambda, spec.A

    terms = {
        "drift": A * w_prime * (profile.inner(xi) + xi * profile.outer(xi) + math.log(M + 1) * w),
        "far_field": A * w * profile.outer(M * xi),
        "excess_diffusion": 2 * (Lam - lam) * _excess_diffusion(profile, xi, M),
        "near_diffusion": 2 * lam * _near_diffusion(profile, xi),
        "far_diffusion": 2 * lam * _far_diffusion(profile, xi),
    }
    return MarginBreakdown.from_terms(xi, M, terms, -w_prime * w)


def inequality_margin(spec: ModulusSpec, xi: float) -> MarginBreakdown:
    """Margin of the inequality with M = 1 below delta and M = max(1, 32 A slope_sup/lambda) above."""
    M = 1.0 if spec.C * xi <= spec.delta else spec.large_M
    return inequality_terms(spec, xi, M)


def reduced_inequality_margin(spec: ModulusSpec, xi: float) -> float:
    """Minus the left side of the drift/diffusion inequality without the M-dependent terms."""
    if not xi > 0:
        raise ModulusRangeError(f"xi must be positive, got {xi}")
    profile = ModulusProfile(spec)
    lam = spec.lambda_
    drift = spec.A * profile.prime(xi) * (profile.inner(xi) + xi * profile.outer(xi))
    return -(drift + lam * _near_diffusion(profile, xi) + lam * _far_diffusion(profile, xi))


def gluing_neighbours(spec: ModulusSpec) -> Tuple[float, float]:
    """Closest xi on each side of the gluing point, judged by C*xi against delta."""
    C, delta = spec.C, spec.delta
    lower = upper = delta / C
    while C * lower >= delta:
        lower = math.nextafter(lower, 0.0)
    while C * math.nextafter(lower, math.inf) < delta:
        lower = math.nextafter(lower, math.inf)
    while C * upper <= delta:
        upper = math.nextafter(upper, math.inf)
    while C * math.nextafter(upper, 0.0) > delta:
        upper = math.nextafter(upper, 0.0)
    return lower, upper


def verification_grid(spec: ModulusSpec, points: int = 200) -> np.ndarray:
    """Log-spaced xi over [1e-6, 1e6] * delta plus the two floating-point neighbours of delta."""
    d = spec.delta_eff
    grid = np.geomspace(1e-6 * d, 1e6 * d, points)
    merged = np.unique(np.concatenate([grid, gluing_neighbours(spec)]))
    return merged[spec.C * merged != spec.delta]


def rescaling_gap(spec: ModulusSpec, r: float, points: int = 12) -> float:
    """Largest relative gap between margin(omega(r.), xi) and r * margin(omega, r xi), M held fixed.

    The sample is a thinned verification grid of omega(r.) together with both neighbours of its gluing point.
    """
    if not r > 0:
        raise ModulusRangeError(f"rescaling factor must be positive, got {r}")
    base = spec.model_copy(update={"amplitude": 1.0, "C": 1.0, "anchor": None})
    scaled = base.model_copy(update={"C": float(r)})
    M = spec.large_M
    full = verification_grid(scaled, 200)
    sample = np.unique(np.concatenate([full[:: max(full.size // points, 1)], gluing_neighbours(scaled)]))
    worst = 0.0
    for xi in sample:
        direct = inequality_terms(scaled, float(xi), M)
        reference = inequality_terms(base, float(r) * float(xi), M)
        scale = abs(r * reference.target) + abs(r * reference.total_margin)
        worst = max(worst, abs(direct.total_margin - r * reference.total_margin) / scale)
    return worst


# Feasibility


class SearchStep(BaseModel):
    delta: float
    gamma_cap: float
    binding: str
    gamma: Optional[float] = None
    status: str
    min_margin: Optional[float] = None
    worst_xi: Optional[float] = None


class InfeasibilityReport(BaseModel):
    reason: str
    binding_constraint: Optional[str] = None
    deltas_tried: int = 0
    worst_margin: Optional[float] = None
    worst_xi: Optional[float] = None


class FeasibilityResult(BaseModel):
    feasible: bool
    spec: Optional[ModulusSpec] = None
    report: Optional[InfeasibilityReport] = None
    binding_constraint: Optional[str] = None
    trace: List[SearchStep] = Field(default_factory=list)


def gamma_caps(
    family: ModulusFamily, delta: float, eps: float, A: float, lambda_: float, Lambda: float, slope_sup: float
) -> Dict[str, float]:
    """Upper bounds on gamma from the parameter conditions of the margin argument."""
    w_delta = _base_power(family, eps, delta)
    M = default_M(A, slope_sup, lambda_)
    caps = {
        "gamma_below_4delta": 4 * delta * (1 - 1e-9),
        "concavity": concavity_cap(family, delta, eps),
        "final": lambda_ / (4 * (A * math.log(M + 1) + 1)),
    }
    if Lambda > lambda_:
        caps["anisotropy"] = lambda_ * w_delta / (8 * (Lambda - lambda_))
    if slope_sup > 0:
        caps["far_field"] = lambda_ * w_delta * M / (16 * slope_sup * A)
    if M > 1:
        caps["log_M"] = w_delta / math.log(M)
    return caps


def _scan(spec: ModulusSpec, xis: np.ndarray, start: int = 0) -> Tuple[Optional[int], float, float]:
    """First xi (starting from ``start``) with a non-positive margin, plus the smallest margin seen."""
    order = list(range(start, xis.size)) + list(range(0, start))
    worst, worst_xi = math.inf, math.nan
    for index in order:
        margin = inequality_margin(spec, float(xis[index])).total_margin
        if margin < worst:
            worst, worst_xi = margin, float(xis[index])
        if not margin > 0:
            return index, worst, worst_xi
    return None, worst, worst_xi


def feasibility_search(
    A: float,
    lambda_: float,
    Lambda: float,
    slope_sup: float,
    family: ModulusFamily = ModulusFamily.KISELEV,
    eps: float = 1.0,
    exponents: Tuple[int, int] = (2, 30),
    grid_points: int = 200,
) -> FeasibilityResult:
    """Largest gamma over dyadic delta = 2^-k for which every margin on the xi-grid is positive."""
    if not lambda_ > 0:
        raise ModulusRangeError("feasibility needs lambda > 0 (beta < 1)")
    if Lambda < lambda_:
        raise ModulusRangeError("Lambda must be at least lambda")

    family = ModulusFamily(family)
    M = default_M(A, slope_sup, lambda_)
    best: Optional[ModulusSpec] = None
    best_binding: Optional[str] = None
    trace: List[SearchStep] = []
    worst_seen = (math.inf, math.nan)
    hint = 0

    for k in range(exponents[0], exponents[1] + 1):
        delta = 2.0 ** -k
        if family is ModulusFamily.KISELEV and delta >= 4 / 9:
            continue
        caps = gamma_caps(family, delta, eps, A, lambda_, Lambda, slope_sup)
        binding = min(caps, key=caps.get)
        cap = caps[binding]
        if best is not None and cap < best.gamma:
            trace.append(SearchStep(delta=delta, gamma_cap=cap, binding=binding, status="pruned"))
            continue

        def candidate(gamma: float) -> ModulusSpec:
            return ModulusSpec(
                family=family,
                delta=delta,
                gamma=gamma,
                eps=eps,
                A=A,
                slope_sup=slope_sup,
                M=M,
                lambda_=lambda_,
                Lambda=Lambda,
            )

        xis = verification_grid(candidate(cap), grid_points)

        def passes(gamma: float) -> bool:
            nonlocal hint, worst_seen
            failed, worst, worst_xi = _scan(candidate(gamma), xis, hint)
            if failed is not None:
                hint = failed
                if worst < worst_seen[0]:
                    worst_seen = (worst, worst_xi)
            return failed is None

        gamma: Optional[float] = None
        if passes(cap):
            gamma = cap
        elif passes(cap * 1e-6):
            lo, hi = cap * 1e-6, cap
            for _ in range(BISECTION_STEPS):
                mid = math.sqrt(lo * hi)
                if passes(mid):
                    lo = mid
                else:
                    hi = mid
            gamma = lo
            binding = "margin"

        if gamma is None:
            logger.debug(f"delta = 2^-{k}: no feasible gamma below {cap:.3e}")
            trace.append(SearchStep(delta=delta, gamma_cap=cap, binding=binding, status="infeasible"))
            continue

        _, margin, worst_xi = _scan(candidate(gamma), xis)
        logger.debug(f"delta = 2^-{k}: gamma = {gamma:.3e} ({binding}), min margin {margin:.3e}")
        trace.append(
            SearchStep(
                delta=delta,
                gamma_cap=cap,
                binding=binding,
                gamma=gamma,
                status="feasible",
                min_margin=margin,
                worst_xi=worst_xi,
            )
        )
        if best is None or gamma >= best.gamma:
            best, best_binding = candidate(gamma), binding

    if best is None:
        report = InfeasibilityReport(
            reason=f"no delta in [2^-{exponents[1]}, 2^-{exponents[0]}] admits a positive margin",
            binding_constraint="margin",
            deltas_tried=len(trace),
            worst_margin=None if math.isinf(worst_seen[0]) else worst_seen[0],
            worst_xi=None if math.isnan(worst_seen[1]) else worst_seen[1],
        )
        logger.info(f"Feasibility search failed: {report.reason}")
        return FeasibilityResult(feasible=False, report=report, binding_constraint="margin", trace=trace)

    logger.info(f"Feasible modulus: delta = {best.delta:.6g}, gamma = {best.gamma:.6g} (binding: {best_binding})")
    return FeasibilityResult(feasible=True, spec=best, binding_constraint=best_binding, trace=trace)
