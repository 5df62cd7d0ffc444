"""Nonlocal operators of the interface equation.

Notation inside this module: p = f_x(x), q = f_xx(x), r = f_xxx(x) and
a = 1 + p**2.  ``dp``/``dm`` are the differences f(x+u) - f(x) and
f(x-u) - f(x) on the positive lattice offsets u, ``ep``/``em`` the same
differences of f_x.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.interpolate import CubicHermiteSpline

from core.exceptions import OperatorDomainError
from core.grid import Grid, InterfaceState, slope, third_derivative
from core.parallel import map_node_chunks
from core.quadrature import (
    OffsetLattice,
    PaddedField,
    QuadratureSpec,
    build_lattice,
    gauss_legendre,
    graded_breakpoints,
)

logger = logging.getLogger(__name__)

_SERIES_TERMS = 30


class KernelSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    h: float
    k_value: float
    K_value: float

    @model_validator(mode="after")
    def _valid(self) -> "KernelSample":
        if self.h == 0:
            raise ValueError("kernel offset must be nonzero")
        if not (np.isfinite(self.k_value) and np.isfinite(self.K_value)):
            raise ValueError("kernel values must be finite")
        return self


@dataclass(frozen=True)
class _Setup:
    grid: Grid
    spec: QuadratureSpec
    lattice: OffsetLattice
    f: PaddedField
    fx: PaddedField
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    mean: float

    @property
    def closed_tail(self) -> bool:
        return self.spec.analytic_tail and not self.grid.periodic

    @property
    def far_tail(self) -> bool:
        return self.spec.analytic_tail and self.grid.periodic and not self.lattice.folded


def _setup(state: InterfaceState, spec: Optional[QuadratureSpec], unfold: bool = False) -> _Setup:
    spec = spec or QuadratureSpec()
    grid = state.grid
    lattice = build_lattice(grid, spec, unfold=unfold)
    scheme = spec.scheme_for(grid)
    slopes = slope(state, scheme)
    fxxx = third_derivative(state, scheme)
    pad = lattice.reach + 2
    return _Setup(
        grid=grid,
        spec=spec,
        lattice=lattice,
        f=PaddedField.build(grid, state.f, slopes.fx, pad, grid.left_limit, grid.right_limit),
        fx=PaddedField.build(grid, slopes.fx, slopes.fxx, pad, 0.0, 0.0),
        p=slopes.fx,
        q=slopes.fxx,
        r=fxxx,
        mean=float(np.mean(state.f)),
    )


def _differences(field: PaddedField, nodes: np.ndarray, lattice: OffsetLattice, base: np.ndarray):
    column = base[:, None]
    return field.on_lattice(nodes, lattice, +1) - column, field.on_lattice(nodes, lattice, -1) - column


# Closed-form pieces


def _arctan_over(c: np.ndarray, H) -> np.ndarray:
    """Integral of 1/(c**2 + h**2) over h from H to infinity."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 0.5 * H
    ratio = (c / H) ** 2
    series = np.zeros_like(c)
    for j in range(_SERIES_TERMS):
        series = series + (-ratio) ** j / (2 * j + 1)
    safe = np.where(small, 1.0, c)
    return np.where(small, series / H, np.arctan(safe / H) / safe)


def _quartic_tail(c: np.ndarray, H) -> np.ndarray:
    """Integral of 1/(c**2 + h**2)**2 over h from H to infinity."""
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 0.5 * H
    ratio = (c / H) ** 2
    series = np.zeros_like(c)
    for j in range(_SERIES_TERMS):
        series = series + (-ratio) ** j * (j + 1) / (2 * j + 3)
    safe = np.where(small, 1.0, c)
    closed = np.arctan(safe / H) / (2 * safe ** 3) - H / (2 * safe ** 2 * (safe ** 2 + H ** 2))
    return np.where(small, series / H ** 3, closed)


def _log_ratio_tail(c_right: np.ndarray, c_left: np.ndarray, H: float) -> np.ndarray:
    """Pair sum of the drift integrand beyond H: 0.5*ln((cR^2+H^2)/(cL^2+H^2))."""
    return 0.5 * np.log1p((c_right ** 2 - c_left ** 2) / (c_left ** 2 + H ** 2))


def _kernel_beyond(c: np.ndarray, p: np.ndarray, h: float, side: int) -> np.ndarray:
    """K(x, side*h) once f has reached its limit (difference c) beyond h."""
    return 1.0 / (c ** 2 + h ** 2) + side * 2 * c * p * _quartic_tail(c, h)


def _kernel_integral_beyond(c: np.ndarray, p: np.ndarray, H: float, side: int) -> np.ndarray:
    """Integral over h > H of K(x, side*h) in the same regime."""
    quartic_moment = 1.0 / (2 * (c ** 2 + H ** 2)) - H * _quartic_tail(c, H)
    return _arctan_over(c, H) + side * 2 * c * p * quartic_moment


# Periodic image sums


def _image_terms(h: np.ndarray, d: np.ndarray, period: float):
    """Sums over k of h_k/(d^2+h_k^2) and d/(d^2+h_k^2), h_k = h + k*period."""
    a = np.pi * h / period
    b = np.pi * d / period
    sin2 = np.sin(a) ** 2
    sinh2 = np.sinh(b) ** 2
    denom = 2 * (sinh2 + sin2)
    scale = np.pi / period
    return scale * np.sin(2 * a) / denom, scale * np.sinh(2 * b) / denom, sin2, sinh2, denom


def _image_muskat(h, d, p, period):
    s1, ds0, _, _, _ = _image_terms(h, d, period)
    return ds0 - p * s1


def _image_drift(h, d, period):
    return -_image_terms(h, d, period)[0]


def _image_original(h, d, e, period):
    return e * _image_terms(h, d, period)[0]


def _image_preibp(h, d, p, period):
    a = np.pi * h / period
    b = np.pi * d / period
    _, _, sin2, sinh2, denom = _image_terms(h, d, period)
    c2 = np.pi ** 2 / period ** 2
    even = 2 * p * (2 * c2) * (2 * sinh2 - 2 * sin2 - 4 * sin2 * sinh2) / denom ** 2
    odd = 2 * (1 - p ** 2) * c2 * np.sinh(2 * b) * np.sin(2 * a) / denom ** 2
    return even + odd


# Pair integrands on the lattice


def _weighted_sum(pairs: np.ndarray, lattice: OffsetLattice) -> np.ndarray:
    return np.sum(pairs * lattice.weights[None, :], axis=1)


def _center(setup: _Setup, value: np.ndarray) -> np.ndarray:
    if not setup.spec.taylor_center:
        return np.zeros_like(value)
    return setup.lattice.center_weight * value


def _limits(setup: _Setup, f0: np.ndarray):
    return setup.grid.right_limit - f0, setup.grid.left_limit - f0


def _muskat_sum(setup: _Setup, f0, p, q, dp, dm) -> np.ndarray:
    lattice = setup.lattice
    u = lattice.offsets[None, :]
    pc = p[:, None]
    if lattice.folded:
        pairs = _image_muskat(u, dp, pc, lattice.period) + _image_muskat(-u, dm, pc, lattice.period)
    else:
        pairs = (dp - u * pc) / (dp ** 2 + u ** 2) + (dm + u * pc) / (dm ** 2 + u ** 2)
    total = _weighted_sum(pairs, lattice) + _center(setup, q / (2 * (1 + p ** 2)))
    if setup.closed_tail:
        H = lattice.tail_start
        c_right, c_left = _limits(setup, f0)
        total = (
            total
            + np.arctan(c_right / H)
            + np.arctan(c_left / H)
            + p * _log_ratio_tail(c_right, c_left, H)
        )
    return total


def _drift_sum(setup: _Setup, f0, p, q, dp, dm) -> np.ndarray:
    lattice = setup.lattice
    u = lattice.offsets[None, :]
    if lattice.folded:
        pairs = _image_drift(u, dp, lattice.period) + _image_drift(-u, dm, lattice.period)
    else:
        pairs = u * (dp - dm) * (dp + dm) / ((dp ** 2 + u ** 2) * (dm ** 2 + u ** 2))
    total = _weighted_sum(pairs, lattice) + _center(setup, p * q / (1 + p ** 2) ** 2)
    if setup.closed_tail:
        total = total + _log_ratio_tail(*_limits(setup, f0), lattice.tail_start)
    return total


def _nodes_values(setup: _Setup, nodes: np.ndarray):
    f0 = setup.f.values[setup.f.pad + nodes]
    return f0, setup.p[nodes], setup.q[nodes], setup.r[nodes]


def muskat_rhs(state: InterfaceState, q: Optional[QuadratureSpec] = None) -> np.ndarray:
    """f_t at every node: the integral of (d_h f - h f_x)/((d_h f)^2 + h^2) over h."""
    setup = _setup(state, q)

    def block(nodes: np.ndarray) -> np.ndarray:
        f0, p, fxx, _ = _nodes_values(setup, nodes)
        dp, dm = _differences(setup.f, nodes, setup.lattice, f0)
        return _muskat_sum(setup, f0, p, fxx, dp, dm)

    return map_node_chunks(block, state.grid.n)


def muskat_rhs_original(state: InterfaceState, q: Optional[QuadratureSpec] = None) -> np.ndarray:
    """f_t in the original form: integral of (f_x(y)-f_x(x))(y-x)/((f(y)-f(x))^2+(y-x)^2) dy."""
    setup = _setup(state, q)
    lattice = setup.lattice

    def block(nodes: np.ndarray) -> np.ndarray:
        f0, p, fxx, _ = _nodes_values(setup, nodes)
        dp, dm = _differences(setup.f, nodes, lattice, f0)
        ep, em = _differences(setup.fx, nodes, lattice, p)
        u = lattice.offsets[None, :]
        if lattice.folded:
            pairs = _image_original(u, dp, ep, lattice.period) + _image_original(-u, dm, em, lattice.period)
        else:
            pairs = ep * u / (dp ** 2 + u ** 2) - em * u / (dm ** 2 + u ** 2)
        total = _weighted_sum(pairs, lattice) + _center(setup, fxx / (1 + p ** 2))
        if setup.closed_tail:
            total = total + p * _log_ratio_tail(*_limits(setup, f0), lattice.tail_start)
        return total

    return map_node_chunks(block, state.grid.n)


def drift_field(state: InterfaceState, q: Optional[QuadratureSpec] = None) -> np.ndarray:
    """Principal value of the integral of -h/((d_h f)^2 + h^2) at every node."""
    setup = _setup(state, q)

    def block(nodes: np.ndarray) -> np.ndarray:
        f0, p, fxx, _ = _nodes_values(setup, nodes)
        dp, dm = _differences(setup.f, nodes, setup.lattice, f0)
        return _drift_sum(setup, f0, p, fxx, dp, dm)

    return map_node_chunks(block, state.grid.n)


def _check_node(state: InterfaceState, x_index: int) -> int:
    if not 0 <= int(x_index) < state.grid.n:
        raise OperatorDomainError(f"node index {x_index} outside 0..{state.grid.n - 1}")
    return int(x_index)


def drift_integral(state: InterfaceState, x_index: int, q: Optional[QuadratureSpec] = None) -> float:
    """Drift coefficient at one node, by exact +/-h pairing."""
    node = np.array([_check_node(state, x_index)])
    setup = _setup(state, q)
    f0, p, fxx, _ = _nodes_values(setup, node)
    dp, dm = _differences(setup.f, node, setup.lattice, f0)
    return float(_drift_sum(setup, f0, p, fxx, dp, dm)[0])


def _preibp_sum(setup: _Setup, f0, p, q, r, dp, dm) -> np.ndarray:
    lattice = setup.lattice
    u = lattice.offsets[None, :]
    pc = p[:, None]
    a = 1 + p ** 2
    center = r / (3 * a) - 3 * p * q ** 2 / (2 * a ** 2)
    if lattice.folded:
        period = lattice.period
        pairs = _image_preibp(u, dp, pc, period) + _image_preibp(-u, dm, pc, period)
        center = center - 2 * p * np.pi ** 2 / (3 * period ** 2)
    else:
        plus = (dp - u * pc) * 2 * (dp * pc + u) / (dp ** 2 + u ** 2) ** 2
        minus = (dm + u * pc) * 2 * (dm * pc - u) / (dm ** 2 + u ** 2) ** 2
        pairs = plus + minus
    total = _weighted_sum(pairs, lattice) + _center(setup, center)
    if setup.closed_tail:
        H = lattice.tail_start
        c_right, c_left = _limits(setup, f0)
        total = (
            total
            + (c_right * (1 - p ** 2) - 2 * p * H) / (c_right ** 2 + H ** 2)
            + (-c_left * (1 - p ** 2) - 2 * p * H) / (c_left ** 2 + H ** 2)
        )
    return total


def slope_rhs_preibp(state: InterfaceState, q: Optional[QuadratureSpec] = None) -> np.ndarray:
    """(f_x)_t before integrating by parts: f_xx * drift + integral of (d_h f - h f_x) k(x,h)."""
    setup = _setup(state, q)

    def block(nodes: np.ndarray) -> np.ndarray:
        f0, p, fxx, fxxx = _nodes_values(setup, nodes)
        dp, dm = _differences(setup.f, nodes, setup.lattice, f0)
        drift = _drift_sum(setup, f0, p, fxx, dp, dm)
        return fxx * drift + _preibp_sum(setup, f0, p, fxx, fxxx, dp, dm)

    return map_node_chunks(block, state.grid.n)


def _reverse_cumtrapz(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Trapezoid integral from each offset to the last one, row by row."""
    segments = 0.5 * (values[:, 1:] + values[:, :-1]) * np.diff(offsets)[None, :]
    out = np.zeros_like(values)
    out[:, :-1] = np.cumsum(segments[:, ::-1], axis=1)[:, ::-1]
    return out


def _kernel_end(setup: _Setup, f0, p, end: float):
    """K(x, +end) and K(x, -end) from the tail model (zero when there is no tail)."""
    if setup.closed_tail:
        c_right, c_left = _limits(setup, f0)
        return _kernel_beyond(c_right, p, end, +1), _kernel_beyond(c_left, p, end, -1)
    if setup.far_tail:
        bias = 2 * (setup.mean - f0) * p / (3 * end ** 3)
        return 1.0 / end ** 2 + bias, 1.0 / end ** 2 - bias
    zero = np.zeros_like(f0)
    return zero, zero


def _lattice_kernels(setup: _Setup, f0, p, q, dp, dm):
    """K(x, +u) and K(x, -u) at every lattice offset.

    The leading singular part 1/(a h^2) -+ 3pq/(a^2 h) is integrated
    exactly; the bounded remainder of k by the trapezoid rule.
    """
    u = setup.lattice.offsets
    end = u[-1]
    pc = p[:, None]
    a = (1 + p ** 2)[:, None]
    odd = (3 * p * q)[:, None] / a ** 2
    k_plus = 2 * (dp * pc + u) / (dp ** 2 + u ** 2) ** 2
    k_minus = 2 * (u - dm * pc) / (dm ** 2 + u ** 2) ** 2

    even_sing = 2 / (a * u ** 3)
    K_even = 1 / (a * u ** 2)
    K_even_end = 1 / (a * end ** 2)
    tail_plus, tail_minus = _kernel_end(setup, f0, p, end)

    K_plus = (
        K_even - odd / u
        + _reverse_cumtrapz(k_plus - (even_sing - odd / u ** 2), u)
        + (tail_plus[:, None] - (K_even_end - odd / end))
    )
    K_minus = (
        K_even + odd / u
        + _reverse_cumtrapz(k_minus - (even_sing + odd / u ** 2), u)
        + (tail_minus[:, None] - (K_even_end + odd / end))
    )
    return K_plus, K_minus


def _postibp_sum(setup: _Setup, f0, p, q, r, dp, dm, ep, em) -> np.ndarray:
    lattice = setup.lattice
    K_plus, K_minus = _lattice_kernels(setup, f0, p, q, dp, dm)
    a = 1 + p ** 2
    center = 0.5 * (r / a - 6 * p * q ** 2 / a ** 2)
    total = _weighted_sum(ep * K_plus + em * K_minus, lattice) + _center(setup, center)
    H = lattice.tail_start
    if setup.closed_tail:
        c_right, c_left = _limits(setup, f0)
        total = total - p * (
            _kernel_integral_beyond(c_right, p, H, +1) + _kernel_integral_beyond(c_left, p, H, -1)
        )
    elif setup.far_tail:
        total = total - 2 * p / H
    return total


def slope_rhs(state: InterfaceState, q: Optional[QuadratureSpec] = None) -> np.ndarray:
    """(f_x)_t after integrating by parts: f_xx * drift + integral of d_h f_x * K(x,h)."""
    drift = drift_field(state, q)
    setup = _setup(state, q, unfold=True)

    def block(nodes: np.ndarray) -> np.ndarray:
        f0, p, fxx, fxxx = _nodes_values(setup, nodes)
        dp, dm = _differences(setup.f, nodes, setup.lattice, f0)
        ep, em = _differences(setup.fx, nodes, setup.lattice, p)
        return _postibp_sum(setup, f0, p, fxx, fxxx, dp, dm, ep, em)

    return setup.q * drift + map_node_chunks(block, state.grid.n)


def linearized_rhs(state: InterfaceState) -> np.ndarray:
    """-pi * (-Laplacian)^(1/2) f by its Fourier symbol -pi*|xi|."""
    grid = state.grid
    if not grid.periodic:
        raise OperatorDomainError("linearized_rhs requires periodic boundary mode")
    wavenumber = 2 * np.pi * np.fft.rfftfreq(grid.n, grid.dx)
    return np.fft.irfft(-np.pi * np.abs(wavenumber) * np.fft.rfft(state.f), grid.n)


# Kernels at arbitrary offsets


def _k_values(p: float, d: np.ndarray, s: np.ndarray) -> np.ndarray:
    return 2 * (d * p + s) / (d ** 2 + s ** 2) ** 2


def kernel_k(
    state: InterfaceState,
    x_index: int,
    s: Union[float, Sequence[float], np.ndarray],
    q: Optional[QuadratureSpec] = None,
) -> Union[float, np.ndarray]:
    """k(x,s) = 2(d_s f f_x + s)/((d_s f)^2 + s^2)^2 with cubic Hermite d_s f off the grid."""
    node = _check_node(state, x_index)
    offsets = np.asarray(s, dtype=float)
    if np.any(offsets == 0):
        raise OperatorDomainError("kernel k is undefined at s = 0")
    setup = _setup(state, q, unfold=True)
    f0 = setup.f.values[setup.f.pad + node]
    p = setup.p[node]
    d = setup.f.at(node + offsets / setup.grid.dx) - f0
    values = _k_values(p, d, offsets)
    return float(values) if values.ndim == 0 else values


def kernel_K_profile(
    state: InterfaceState,
    x_index: int,
    hs: Union[Sequence[float], np.ndarray],
    q: Optional[QuadratureSpec] = None,
) -> np.ndarray:
    """K(x,h) for many offsets at one node.

    k is integrated outward from |h| with Gauss-Legendre panels (cell
    multiples, halved toward the origin, so neighbouring breakpoints differ
    by at most a factor two) up to the lattice end, then the tail model
    takes over.
    """
    node = _check_node(state, x_index)
    hs = np.atleast_1d(np.asarray(hs, dtype=float))
    if np.any(hs == 0):
        raise OperatorDomainError("kernel K is undefined at h = 0")

    setup = _setup(state, q, unfold=True)
    dx = setup.grid.dx
    end = setup.lattice.end
    f0 = setup.f.values[setup.f.pad + node]
    p = setup.p[node]
    tail_plus, tail_minus = (float(v[0]) for v in _kernel_end(setup, np.array([f0]), np.array([p]), end))

    magnitudes = np.abs(hs)
    inside = magnitudes < end
    breaks = graded_breakpoints(np.unique(magnitudes[inside]), dx, end)

    nodes, weights = gauss_legendre()
    left, right = breaks[:-1], breaks[1:]
    half = 0.5 * (right - left)
    s = (0.5 * (right + left))[:, None] + half[:, None] * nodes[None, :]
    d_plus = setup.f.at(node + s / dx) - f0
    d_minus = setup.f.at(node - s / dx) - f0
    k_plus = 2 * (d_plus * p + s) / (d_plus ** 2 + s ** 2) ** 2
    k_minus = 2 * (s - d_minus * p) / (d_minus ** 2 + s ** 2) ** 2

    def outward(values: np.ndarray) -> np.ndarray:
        panels = half * (values @ weights)
        cumulative = np.zeros(breaks.size)
        cumulative[:-1] = np.cumsum(panels[::-1])[::-1]
        return cumulative

    cum_plus = outward(k_plus) + tail_plus
    cum_minus = outward(k_minus) + tail_minus

    out = np.empty(hs.size)
    index = np.searchsorted(breaks, magnitudes[inside])
    out[inside] = np.where(hs[inside] > 0, cum_plus[index], cum_minus[index])

    beyond = ~inside
    if np.any(beyond):
        out[beyond] = _kernel_outside(setup, f0, p, hs[beyond])
    return out


def _kernel_outside(setup: _Setup, f0: float, p: float, hs: np.ndarray) -> np.ndarray:
    magnitudes = np.abs(hs)
    signs = np.sign(hs)
    if setup.closed_tail:
        c = np.where(signs > 0, setup.grid.right_limit - f0, setup.grid.left_limit - f0)
        return 1.0 / (c ** 2 + magnitudes ** 2) + signs * 2 * c * p * _quartic_tail(c, magnitudes)
    if setup.far_tail:
        return 1.0 / magnitudes ** 2 + signs * 2 * (setup.mean - f0) * p / (3 * magnitudes ** 3)
    return np.zeros(hs.size)


def kernel_K(state: InterfaceState, x_index: int, h: float, q: Optional[QuadratureSpec] = None) -> float:
    """K(x,h): integral of k from h to infinity (h > 0) or of -k from -infinity to h (h < 0)."""
    return float(kernel_K_profile(state, x_index, [h], q)[0])


def kernel_symmetry_split(
    state: InterfaceState,
    x_index: int,
    hs: Union[Sequence[float], np.ndarray],
    q: Optional[QuadratureSpec] = None,
):
    """Even and odd parts (K(h) +- K(-h))/2 for positive offsets ``hs``."""
    hs = np.abs(np.atleast_1d(np.asarray(hs, dtype=float)))
    values = kernel_K_profile(state, x_index, np.concatenate([hs, -hs]), q)
    plus, minus = values[: hs.size], values[hs.size :]
    return 0.5 * (plus + minus), 0.5 * (plus - minus)


def kernel_samples(
    state: InterfaceState,
    x_indices: Sequence[int],
    hs: Union[Sequence[float], np.ndarray],
    q: Optional[QuadratureSpec] = None,
) -> List[KernelSample]:
    """KernelSample records on the (x, h) lattice."""
    hs = np.atleast_1d(np.asarray(hs, dtype=float))
    samples: List[KernelSample] = []
    for index in x_indices:
        K_values = kernel_K_profile(state, index, hs, q)
        k_values = np.atleast_1d(kernel_k(state, index, hs, q))
        x = float(state.x[index])
        samples.extend(
            KernelSample(x=x, h=float(h), k_value=float(k), K_value=float(K))
            for h, k, K in zip(hs, k_values, K_values)
        )
    return samples


# Off-grid evaluation


def _hermite_spline(grid: Grid, values: np.ndarray, slopes: np.ndarray, left: float, right: float):
    """Global cubic Hermite spline and an evaluator honoring the boundary mode."""
    if grid.periodic:
        xs = grid.x0 + grid.dx * np.arange(grid.n + 1)
        spline = CubicHermiteSpline(xs, np.append(values, values[0]), np.append(slopes, slopes[0]))

        def evaluate(points: np.ndarray) -> np.ndarray:
            return spline(grid.x0 + np.mod(points - grid.x0, grid.period))

        return evaluate

    xs = grid.x0 + grid.dx * np.arange(-2, grid.n + 2)
    padded = np.concatenate([[left, left], values, [right, right]])
    padded_slopes = np.concatenate([[0.0, 0.0], slopes, [0.0, 0.0]])
    spline = CubicHermiteSpline(xs, padded, padded_slopes)

    def evaluate(points: np.ndarray) -> np.ndarray:
        inside = spline(np.clip(points, xs[0], xs[-1]))
        return np.where(points < xs[0], left, np.where(points > xs[-1], right, inside))

    return evaluate


def ft_pointwise(
    state: InterfaceState,
    x: Union[float, Sequence[float], np.ndarray],
    q: Optional[QuadratureSpec] = None,
) -> Union[float, np.ndarray]:
    """f_t at arbitrary positions inside the grid span, from interpolated f."""
    grid = state.grid
    points = np.asarray(x, dtype=float)
    flat = np.atleast_1d(points)
    upper = grid.x0 + grid.span
    if np.any(flat < grid.x0 - 1e-12) or np.any(flat > upper + 1e-12):
        raise OperatorDomainError(f"positions must lie in [{grid.x0}, {upper}]")

    setup = _setup(state, q)
    f_of = _hermite_spline(grid, state.f, setup.p, grid.left_limit, grid.right_limit)
    fx_of = _hermite_spline(grid, setup.p, setup.q, 0.0, 0.0)
    fxx_of = _hermite_spline(grid, setup.q, setup.r, 0.0, 0.0)
    u = setup.lattice.offsets

    def block(index: np.ndarray) -> np.ndarray:
        at = flat[index]
        f0, p, fxx = f_of(at), fx_of(at), fxx_of(at)
        dp = f_of(at[:, None] + u[None, :]) - f0[:, None]
        dm = f_of(at[:, None] - u[None, :]) - f0[:, None]
        return _muskat_sum(setup, f0, p, fxx, dp, dm)

    values = map_node_chunks(block, flat.size)
    return float(values[0]) if points.ndim == 0 else values
