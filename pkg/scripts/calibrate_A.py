#!/usr/bin/env python3
"""Calibrate the drift constant A on stress scenarios.

For each scenario the odd part of the kernel is compared with the empirical
modulus of f_x: A must satisfy |k(x,s) + k(x,-s)| |s|^3 <= A omega_f(|s|) at
every sampled node and offset, where omega_f(s) is the largest oscillation of
f_x over a window of length s.
"""

import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pandas as pd
from scipy.ndimage import maximum_filter1d, minimum_filter1d

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import config
from core.grid import BoundaryMode, Grid, InterfaceState, beta_of, sample_scenario, slope
from core.operators import kernel_k

logging.basicConfig(level=getattr(logging, config.LOG_LEVEL.upper()))
logger = logging.getLogger(__name__)

STRESS_SCENARIOS: List[Dict[str, Any]] = [
    {"name": "gaussian", "params": {"amplitude": 1.0, "width": 1.0}},
    {"name": "gaussian", "params": {"amplitude": 0.6, "width": 0.5}},
    {"name": "tanh-step", "params": {"amplitude": 0.8, "width": 1.0}},
    {"name": "tent", "params": {"amplitude": 0.5, "width": 2.0}, "mollify": 0.2},
    {"name": "sine", "params": {"amplitude": 0.5}, "periodic": True},
]


def empirical_modulus(fx: np.ndarray, cells: np.ndarray, periodic: bool) -> np.ndarray:
    """Largest oscillation of fx over windows of j+1 consecutive nodes, for each j in ``cells``."""
    mode = "wrap" if periodic else "nearest"
    out = np.empty(len(cells))
    for index, j in enumerate(cells):
        upper = maximum_filter1d(fx, size=int(j) + 1, mode=mode)
        lower = minimum_filter1d(fx, size=int(j) + 1, mode=mode)
        out[index] = float(np.max(upper - lower))
    return out


def required_A(state: InterfaceState, nodes: int = 16, offsets: int = 24) -> Dict[str, float]:
    grid = state.grid
    fx = slope(state).fx
    bounds = beta_of(slope(state))
    cells = np.unique(np.geomspace(1, max(grid.n // 4, 2), offsets).astype(int))
    s = cells * grid.dx
    omega_f = empirical_modulus(fx, cells, grid.periodic)
    usable = omega_f > 1e-12

    worst, worst_x, worst_s = 0.0, math.nan, math.nan
    for node in np.unique(np.round(np.linspace(0, grid.n - 1, nodes)).astype(int)):
        odd = np.abs(np.asarray(kernel_k(state, int(node), s)) + np.asarray(kernel_k(state, int(node), -s)))
        ratio = np.where(usable, odd * s ** 3 / np.where(usable, omega_f, 1.0), 0.0)
        k = int(np.argmax(ratio))
        if ratio[k] > worst:
            worst, worst_x, worst_s = float(ratio[k]), float(grid.x[node]), float(s[k])

    return {
        "beta": bounds.beta,
        "slope_sup": bounds.slope_sup,
        "A_required": worst,
        "worst_x": worst_x,
        "worst_s": worst_s,
    }


def stress_state(entry: Dict[str, Any], n: int, dx: float) -> InterfaceState:
    if entry.get("periodic"):
        grid = Grid(n=n, dx=2 * math.pi / n, x0=0.0, boundary_mode=BoundaryMode.PERIODIC)
    else:
        grid = Grid(n=n, dx=dx, x0=-(n - 1) * dx / 2)
    return sample_scenario(entry["name"], entry["params"], grid, entry.get("mollify"))


def calibrate(n: int = 256, dx: float = 0.05, nodes: int = 16, offsets: int = 24) -> pd.DataFrame:
    rows = []
    for entry in STRESS_SCENARIOS:
        state = stress_state(entry, n, dx)
        row = {"scenario": entry["name"], "params": str(entry["params"])}
        row.update(required_A(state, nodes, offsets))
        logger.info(f"{entry['name']} {entry['params']}: A >= {row['A_required']:.4g}")
        rows.append(row)
    return pd.DataFrame(rows)


@click.command()
@click.option("--n", default=256, type=int, help="Nodes per stress grid.")
@click.option("--dx", default=0.05, type=float, help="Spacing of the compact stress grids.")
@click.option("--nodes", default=16, type=int, help="Sampled nodes per scenario.")
@click.option("--offsets", default=24, type=int, help="Sampled offsets per node.")
@click.option("--out", "output", type=click.Path(path_type=Path), default=None, help="Write the table as CSV.")
def main(n: int, dx: float, nodes: int, offsets: int, output: Optional[Path]) -> None:
    """Print the smallest A consistent with every stress scenario."""
    try:
        table = calibrate(n, dx, nodes, offsets)
    except Exception as e:
        logger.error(f"Calibration failed: {e}", exc_info=True)
        sys.exit(1)

    click.echo(table.to_string(index=False))
    click.echo(f"\n📊 Calibrated A = {table['A_required'].max():.6g} (MUSKAT_MODULUS_A = {config.DEFAULT_MODULUS_A:g})")
    if output is not None:
        table.to_csv(output, index=False, float_format="%.17g", lineterminator="\n")
        click.echo(f"✅ Table written to {output}")


if __name__ == "__main__":
    main()
