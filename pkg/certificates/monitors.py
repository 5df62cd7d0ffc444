"""Snapshot monitors: each turns one claim about the flow into a signed margin."""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

import config
from core.base_monitor import BaseMonitor, MonitorContext, MonitorRecord, Witness
from core.grid import Grid, InterfaceState, beta_of, extended, slope
from core.modulus import ModulusSpec, rho, rho_prime_zero
from core.operators import ft_pointwise, kernel_K_profile, kernel_k
from core.quadrature import QuadratureSpec

logger = logging.getLogger(__name__)

REGULARITY_RANGES: Tuple[Tuple[float, float], ...] = ((1e-3, 1e-2), (1e-2, 1e-1))
SUP_FACTOR = 10.0


def _slopes(state: InterfaceState, q: QuadratureSpec):
    return slope(state, q.scheme_for(state.grid))


def pair_subsample(n: int, cap: Optional[int] = None) -> np.ndarray:
    """At most ``cap`` node indices spread evenly over 0..n-1, ends included."""
    cap = cap or config.PAIR_SUBSAMPLE_CAP
    if n <= cap:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, cap)).astype(int))


def _separation(grid: Grid, xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
    distance = np.abs(xi - xj)
    if grid.periodic:
        distance = np.minimum(distance, grid.period - distance)
    return distance


def pair_margin(fx: np.ndarray, grid: Grid, spec: ModulusSpec, t: float, i: int, j: int) -> float:
    """rho(|x_i - x_j|/t) - (f_x(x_i) - f_x(x_j)) for one ordered pair."""
    distance = _separation(grid, np.array([grid.x[i]]), np.array([grid.x[j]]))
    return float(rho(spec, distance / t)[0] - (fx[i] - fx[j]))


def modulus_margin(
    fx: np.ndarray, grid: Grid, spec: ModulusSpec, t: float, cap: Optional[int] = None
) -> Tuple[float, Tuple[int, int]]:
    """Smallest rho(|x-y|/t) - (f_x(x) - f_x(y)) over the pair set and the ordered pair attaining it.

    The pair set is every pair of a node subsample plus every pair of grid
    neighbours (including the wrap-around pair on periodic grids).
    """
    x = grid.x
    idx = pair_subsample(fx.size, cap)
    sub = fx[idx]
    diff = sub[:, None] - sub[None, :]
    distance = _separation(grid, x[idx][:, None], x[idx][None, :])
    off = ~np.eye(idx.size, dtype=bool)
    margins = np.full(diff.shape, np.inf)
    margins[off] = rho(spec, distance[off] / t) - diff[off]
    flat = int(np.argmin(margins))
    row, col = divmod(flat, idx.size)
    best, pair = float(margins[row, col]), (int(idx[row]), int(idx[col]))

    left = np.arange(fx.size - 1)
    right = left + 1
    if grid.periodic:
        left, right = np.append(left, fx.size - 1), np.append(right, 0)
    step = fx[right] - fx[left]
    upper = np.where(step >= 0, right, left)
    lower = np.where(step >= 0, left, right)
    near = rho(spec, _separation(grid, x[upper], x[lower]) / t) - (fx[upper] - fx[lower])
    k = int(np.argmin(near))
    if near[k] < best:
        best, pair = float(near[k]), (int(upper[k]), int(lower[k]))
    return best, pair


def modulus_check(
    state: InterfaceState,
    spec: ModulusSpec,
    t: Optional[float] = None,
    q: Optional[QuadratureSpec] = None,
    time_offset: float = 0.0,
    cap: Optional[int] = None,
    monitor: Optional["ModulusMonitor"] = None,
) -> MonitorRecord:
    """Check f_x(x) - f_x(y) <= rho(|x-y|/(t + t0)) on the sampled pair set."""
    monitor = monitor or ModulusMonitor(cap=cap)
    q = q or QuadratureSpec()
    elapsed = (state.t if t is None else t) + time_offset
    if not elapsed > 0:
        return monitor.skip(state, "modulus bound needs t > 0")
    fx = _slopes(state, q).fx
    margin, (i, j) = modulus_margin(fx, state.grid, spec, elapsed, cap or monitor.cap)
    x = state.grid.x
    witness = Witness(x=float(x[i]), y=float(x[j]), h=float(_separation(state.grid, x[i], x[j])))
    witness_margin = pair_margin(fx, state.grid, spec, elapsed, i, j)
    if not math.isclose(witness_margin, margin, rel_tol=1e-9, abs_tol=1e-12):
        logger.warning(f"witness pair ({i}, {j}) gives margin {witness_margin:.6g}, search gave {margin:.6g}")
    detail = {"elapsed": elapsed, "i": i, "j": j, "witness_margin": witness_margin}
    return monitor.judge(state, margin, witness=witness, detail=detail)


def ellipticity_check(
    state: InterfaceState,
    q: Optional[QuadratureSpec] = None,
    nodes: int = 16,
    offsets: int = 32,
    monitor: Optional["EllipticityMonitor"] = None,
) -> MonitorRecord:
    """Relative distance of h^2 K(x,h) and |s|^3 sgn(s) k(x,s)/2 to the band [lambda, Lambda]."""
    monitor = monitor or EllipticityMonitor(nodes=nodes, offsets=offsets)
    q = q or QuadratureSpec()
    grid = state.grid
    bounds = beta_of(_slopes(state, q))
    if not bounds.elliptic:
        return monitor.skip(state, f"beta = {bounds.beta:.4f} >= 1", {"beta": bounds.beta})

    lam, Lam = bounds.lambda_, bounds.Lambda
    radius = q.radius(grid)
    magnitudes = np.geomspace(grid.dx / 2, radius / 2, max(offsets // 2, 1))
    hs = np.concatenate([magnitudes, -magnitudes])
    node_ids = np.unique(np.round(np.linspace(0, grid.n - 1, nodes)).astype(int))

    best, witness = math.inf, None
    worst_K, worst_k = math.inf, math.inf
    for node in node_ids:
        scaled_K = hs ** 2 * kernel_K_profile(state, int(node), hs, q)
        scaled_k = np.abs(hs) ** 3 * np.sign(hs) * np.asarray(kernel_k(state, int(node), hs, q)) / 2
        rel_K = np.minimum((scaled_K - lam) / lam, (Lam - scaled_K) / Lam)
        rel_k = np.minimum((scaled_k - lam) / lam, (Lam - scaled_k) / Lam)
        worst_K, worst_k = min(worst_K, float(rel_K.min())), min(worst_k, float(rel_k.min()))
        combined = np.minimum(rel_K, rel_k)
        k = int(np.argmin(combined))
        if combined[k] < best:
            best = float(combined[k])
            witness = Witness(x=float(grid.x[node]), h=float(hs[k]))

    detail = {"beta": bounds.beta, "lambda": lam, "Lambda": Lam, "K_margin": worst_K, "k_margin": worst_k}
    return monitor.judge(state, best, witness=witness, detail=detail)


def ft_regularity_check(
    state: InterfaceState,
    q: Optional[QuadratureSpec] = None,
    pair_budget: int = 256,
    ranges: Sequence[Tuple[float, float]] = REGULARITY_RANGES,
    sup_constant: Optional[float] = None,
    monitor: Optional["RegularityMonitor"] = None,
) -> MonitorRecord:
    """Fit C in |f_t(x) - f_t(y)| <= C (-log|x-y|)|x-y|(1 + 1/t) on each range and bound sup|f_t|.

    C on a range is the log-average over its separations of the largest ratio seen across anchors.
    The margin is the smaller of log 2 minus the largest |log(C_i/C_j)| and
    log(C' max{-log t, 1} / sup|f_t|), with C' = SUP_FACTOR * sup|f_x| unless given.
    """
    monitor = monitor or RegularityMonitor(pair_budget=pair_budget, ranges=ranges, sup_constant=sup_constant)
    q = q or QuadratureSpec()
    t = state.t
    if not t > 0:
        return monitor.skip(state, "f_t regularity needs t > 0")

    grid = state.grid
    per_range = max(pair_budget // len(ranges), 4)
    separations_per_range = 4
    anchors_per_sep = max(per_range // separations_per_range, 1)
    lo_x, hi_x = grid.x0, grid.x0 + grid.span
    fits, spreads = [], []
    ft_sup = 0.0
    for low, high in sorted(ranges):
        seps = np.geomspace(low, high, separations_per_range)
        anchors = np.linspace(lo_x + 0.1 * grid.span, hi_x - 0.1 * grid.span, anchors_per_sep)
        xs = np.repeat(anchors, seps.size)
        offsets = np.tile(seps, anchors.size)
        ys = np.where(xs + offsets <= hi_x, xs + offsets, xs - offsets)
        values = np.asarray(ft_pointwise(state, np.concatenate([xs, ys]), q))
        jumps = np.abs(values[: xs.size] - values[xs.size :]).reshape(anchors.size, seps.size)
        ft_sup = max(ft_sup, float(np.max(np.abs(values))))
        ratios = jumps.max(axis=0) / (-np.log(seps) * seps * (1 + 1 / t))
        fits.append(float(np.exp(np.mean(np.log(np.maximum(ratios, 1e-300))))))
        spreads.append(float(jumps.max()))

    floor = 1e-12 * max(ft_sup, 1.0)
    detail: Dict[str, float] = {f"C_{i}": c for i, c in enumerate(fits)}
    spread = 0.0
    for i in range(len(fits)):
        for j in range(i + 1, len(fits)):
            flat_i, flat_j = spreads[i] <= floor, spreads[j] <= floor
            if flat_i and flat_j:
                continue
            if flat_i or flat_j:
                spread = math.inf
                break
            spread = max(spread, abs(math.log(fits[i] / fits[j])))
        if math.isinf(spread):
            break
    detail["spread"] = spread

    if sup_constant is None:
        sup_constant = SUP_FACTOR * float(np.max(np.abs(_slopes(state, q).fx)))
    allowed = sup_constant * max(-math.log(t), 1.0)
    detail.update({"ft_sup": ft_sup, "sup_allowed": allowed, "sup_constant": sup_constant})
    if ft_sup <= floor:
        sup_margin = math.inf
    elif allowed <= 0:
        sup_margin = -math.inf
    else:
        sup_margin = math.log(allowed / ft_sup)
    detail["sup_margin"] = sup_margin
    return monitor.judge(state, min(math.log(2.0) - spread, sup_margin), detail=detail)


def _default_triples(n: int) -> np.ndarray:
    centres = pair_subsample(n, 32)
    cells = 2 ** np.arange(0, max(int(np.log2(max(n // 4, 1))), 0) + 1)
    grid = np.array(np.meshgrid(centres, cells, cells, indexing="ij")).reshape(3, -1).T
    return grid.astype(int)


def difference_bounds_check(
    state: InterfaceState,
    spec: ModulusSpec,
    triples: Optional[np.ndarray] = None,
    scale: Optional[float] = None,
    monitor: Optional["DifferenceBoundsMonitor"] = None,
) -> MonitorRecord:
    """Second differences against the modulus m(h) = rho(h/scale) on grid-aligned triples.

    Each triple (i, j, m) is a node, an offset of j cells and a separation of
    2m cells. Checked: |f(x+h) + f(x-h) - 2f(x)| <= m(h) h, and
    |d_h f(x + xi/2) - d_h f(x - xi/2)| <= xi m(|h|) for h = +-j dx.
    """
    monitor = monitor or DifferenceBoundsMonitor()
    grid = state.grid
    scale = state.t if scale is None else scale
    if not scale > 0:
        return monitor.skip(state, "difference bounds need a positive time scale")

    triples = _default_triples(grid.n) if triples is None else np.asarray(triples, dtype=int).reshape(-1, 3)
    reach = int(np.max(np.abs(triples[:, 1]) + np.abs(triples[:, 2]))) + 1
    padded = extended(state.f, grid, reach, grid.left_limit, grid.right_limit)
    i, j, m = triples[:, 0] + reach, np.abs(triples[:, 1]), np.abs(triples[:, 2])
    h = j * grid.dx
    xi = 2 * m * grid.dx

    def modulus(values: np.ndarray) -> np.ndarray:
        return np.asarray(rho(spec, values / scale))

    second = np.abs(padded[i + j] + padded[i - j] - 2 * padded[i])
    symmetric = modulus(h) * h - second

    up, down = i + m, i - m
    forward = np.abs((padded[up + j] - padded[up]) - (padded[down + j] - padded[down]))
    backward = np.abs((padded[up - j] - padded[up]) - (padded[down - j] - padded[down]))
    shifted = xi * modulus(h) - np.maximum(forward, backward)

    margins = np.minimum(symmetric, shifted)
    k = int(np.argmin(margins))
    witness = Witness(x=float(grid.x0 + triples[k, 0] * grid.dx), h=float(h[k]), xi=float(xi[k]))
    detail = {"symmetric_margin": float(symmetric.min()), "shifted_margin": float(shifted.min())}
    return monitor.judge(state, float(margins[k]), witness=witness, detail=detail)


class MaxPrincipleMonitor(BaseMonitor):
    """sup f_x may not grow, inf f_x may not drop, beta may not exceed its initial value."""

    def __init__(self, tolerance: Optional[float] = None):
        super().__init__("max_principle", "slope maximum principle and beta monotonicity", tolerance)

    def tolerance_for(self, grid: Grid) -> float:
        return self.fixed_tolerance if self.fixed_tolerance is not None else 10 * grid.dx ** 2

    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        q = context.quadrature
        now = beta_of(_slopes(state, q))
        before = beta_of(_slopes(context.previous or context.initial, q))
        beta0 = context.initial_beta
        raw = min(before.sup_fx - now.sup_fx, now.inf_fx - before.inf_fx, beta0 - now.beta)
        detail = {"sup_fx": now.sup_fx, "inf_fx": now.inf_fx, "beta": now.beta, "raw_margin": raw}
        if beta0 >= 1:
            return self.skip(state, f"initial beta = {beta0:.4f} >= 1", detail)
        return self.judge(state, raw, detail=detail)


class EllipticityMonitor(BaseMonitor):
    def __init__(self, nodes: int = 16, offsets: int = 32, tolerance: Optional[float] = None):
        super().__init__("ellipticity", "kernel sandwich lambda <= h^2 K <= Lambda", tolerance)
        self.nodes = nodes
        self.offsets = offsets

    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        return ellipticity_check(state, context.quadrature, self.nodes, self.offsets, monitor=self)


class ModulusMonitor(BaseMonitor):
    def __init__(self, cap: Optional[int] = None, tolerance: Optional[float] = None):
        super().__init__("modulus", "f_x(x) - f_x(y) <= rho(|x-y|/t)", tolerance)
        self.cap = cap or config.PAIR_SUBSAMPLE_CAP

    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        if context.modulus is None:
            return self.skip(state, "no modulus available")
        if context.initial_beta >= 1:
            return self.skip(state, f"initial beta = {context.initial_beta:.4f} >= 1")
        return modulus_check(
            state, context.modulus, q=context.quadrature, time_offset=context.time_offset, monitor=self
        )


class CurvatureMonitor(BaseMonitor):
    """max|f_xx(t)| against rho'(0)/t; the tolerance is a fraction of the bound."""

    def __init__(self, slack: float = 0.1):
        super().__init__("curvature", "max|f_xx| <= rho'(0)/t")
        self.slack = slack

    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        elapsed = state.t + context.time_offset
        if context.modulus is None:
            return self.skip(state, "no modulus available")
        if context.initial_beta >= 1:
            return self.skip(state, f"initial beta = {context.initial_beta:.4f} >= 1")
        if not elapsed > 0:
            return self.skip(state, "curvature bound needs t > 0")

        q = context.quadrature
        fxx_max = float(np.max(np.abs(_slopes(state, q).fxx)))
        bound = rho_prime_zero(context.modulus) / elapsed
        detail = {"max_fxx": fxx_max, "bound": bound, "scaled_fxx": fxx_max * elapsed}
        if context.previous is not None and context.previous.t > 0:
            growth = fxx_max - float(np.max(np.abs(_slopes(context.previous, q).fxx)))
            detail["fxx_growth"] = growth
            if growth > 0:
                logger.debug(f"max|f_xx| grew by {growth:.3e} at t = {state.t:.6g}")
        tolerance = min(self.slack * bound, 1e300)
        return self.judge(state, bound - fxx_max, detail=detail, tolerance=tolerance)


class RegularityMonitor(BaseMonitor):
    """Log-Lipschitz fit of f_t across ranges, and sup|f_t| against C' max{-log t, 1}.

    Without a fixed C' the monitor uses SUP_FACTOR times the slope bound of the initial data.
    """

    def __init__(
        self,
        pair_budget: int = 256,
        ranges: Sequence[Tuple[float, float]] = REGULARITY_RANGES,
        sup_constant: Optional[float] = None,
        tolerance: Optional[float] = None,
    ):
        super().__init__("ft_regularity", "log-Lipschitz fit of f_t stable across ranges", tolerance)
        self.pair_budget = pair_budget
        self.ranges = tuple(ranges)
        self.sup_constant = sup_constant

    def tolerance_for(self, grid: Grid) -> float:
        return self.fixed_tolerance if self.fixed_tolerance is not None else 0.0

    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        if context.initial_beta >= 1:
            return self.skip(state, f"initial beta = {context.initial_beta:.4f} >= 1")
        sup_constant = self.sup_constant
        if sup_constant is None:
            sup_constant = SUP_FACTOR * float(np.max(np.abs(_slopes(context.initial, context.quadrature).fx)))
        return ft_regularity_check(
            state, context.quadrature, self.pair_budget, self.ranges, sup_constant=sup_constant, monitor=self
        )


class DifferenceBoundsMonitor(BaseMonitor):
    def __init__(self, tolerance: Optional[float] = None):
        super().__init__("difference_bounds", "second differences bounded through rho(./t)", tolerance)

    def tolerance_for(self, grid: Grid) -> float:
        return self.fixed_tolerance if self.fixed_tolerance is not None else 10 * grid.dx ** 2

    def evaluate(self, state: InterfaceState, context: MonitorContext) -> MonitorRecord:
        if context.modulus is None:
            return self.skip(state, "no modulus available")
        if context.initial_beta >= 1:
            return self.skip(state, f"initial beta = {context.initial_beta:.4f} >= 1")
        return difference_bounds_check(
            state, context.modulus, scale=state.t + context.time_offset, monitor=self
        )


MONITORS = {
    "max_principle": MaxPrincipleMonitor,
    "ellipticity": EllipticityMonitor,
    "modulus": ModulusMonitor,
    "curvature": CurvatureMonitor,
    "ft_regularity": RegularityMonitor,
    "difference_bounds": DifferenceBoundsMonitor,
}


def build_monitors(names: Sequence[str], tolerances: Optional[Dict[str, float]] = None) -> list:
    """Instantiate monitors by name, applying per-monitor tolerance overrides."""
    tolerances = tolerances or {}
    monitors = []
    for name in names:
        if name not in MONITORS:
            raise ValueError(f"Monitor '{name}' not available. Available monitors: {list(MONITORS.keys())}")
        cls = MONITORS[name]
        if name == "curvature":
            monitors.append(cls(slack=tolerances.get(name, 0.1)))
        else:
            monitors.append(cls(tolerance=tolerances.get(name)))
    return monitors
