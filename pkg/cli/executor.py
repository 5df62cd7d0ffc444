"""Command executors: each one turns a run configuration into artifacts and an exit code."""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

import click
import numpy as np
import pandas as pd
from pydantic import ValidationError

import config
from certificates.monitors import build_monitors
from cli.artifacts import (
    attach_run_log,
    certificate,
    detach_run_log,
    feasibility_record,
    margins_frame,
    modulus_record,
    write_dump,
    write_frame,
    write_json,
)
from cli.run_config import ModulusBlock, RunConfig, load_run_config
from core.exceptions import BlowUpError, ConfigError, GridError, ModulusRangeError, QuadratureError, ScenarioError
from core.grid import EllipticityBounds, InterfaceState, beta_of, read_state_csv, sample_scenario, slope, write_state_csv
from core.modulus import (
    FeasibilityResult,
    ModulusSpec,
    feasibility_search,
    rescaling_gap,
    rho_from_omega,
    verification_grid,
)
from core.operators import kernel_samples, muskat_rhs, muskat_rhs_original
from core.quadrature import QuadratureSpec
from evolve.stepper import simulate
from evolve.trajectory import Trajectory, save_trajectory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_BLOWUP = 3

INPUT_ERRORS = (ValidationError, ConfigError, ScenarioError, GridError, ModulusRangeError)

GLYPHS = {"pass": "✅", "fail": "❌", "skip": "⏭️"}

SCALING_FACTORS = (0.5, 2.0, 3.0, 10.0)


def _guarded(label: str, action: Callable[[], int]) -> int:
    """Run a command body, mapping exceptions onto the exit-code contract."""
    try:
        return action()
    except INPUT_ERRORS as e:
        logger.error(f"{label}: invalid input: {e}")
        click.echo(f"❌ {label}: invalid input: {e}", err=True)
        return EXIT_INVALID
    except BlowUpError as e:
        logger.error(f"{label}: blow-up abort: {e}")
        return EXIT_BLOWUP
    except Exception as e:
        logger.error(f"{label} failed: {e}", exc_info=True)
        return EXIT_FAILED


class RunExecutor:
    """Carries one run configuration through a command."""

    def __init__(self, run_config: RunConfig, output_dir: Optional[Path] = None):
        self.run_config = run_config
        self.output_dir = Path(output_dir) if output_dir is not None else run_config.output.directory
        self._log_handler: Optional[logging.Handler] = None

    # Shared steps

    def open_output(self) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if config.LOG_TO_FILE and self._log_handler is None:
            self._log_handler = attach_run_log(self.output_dir)
        return self.output_dir

    def close_output(self) -> None:
        detach_run_log(self._log_handler)
        self._log_handler = None

    @property
    def modulus_block(self) -> ModulusBlock:
        return self.run_config.modulus or ModulusBlock()

    def initial_state(self) -> InterfaceState:
        rc = self.run_config
        if rc.scenario is None or rc.grid is None:
            raise ConfigError("this command needs scenario and grid blocks")
        return sample_scenario(rc.scenario.name, rc.scenario.params, rc.grid, rc.scenario.mollify)

    def measure(self, state: InterfaceState) -> EllipticityBounds:
        bounds = beta_of(slope(state, self.run_config.quadrature.scheme_for(state.grid)))
        logger.info(
            f"Initial slopes: beta = {bounds.beta:.6g}, lambda = {bounds.lambda_:.6g}, Lambda = {bounds.Lambda:.6g}"
        )
        return bounds

    def ellipticity_inputs(self, bounds: Optional[EllipticityBounds]) -> Tuple[float, float, float]:
        """(lambda, Lambda, slope_sup): modulus-block overrides first, then the measured values."""
        block = self.modulus_block
        measured = {}
        if bounds is not None:
            measured = {"lambda": bounds.lambda_, "Lambda": bounds.Lambda, "slope_sup": bounds.slope_sup}
        given = {"lambda": block.lambda_, "Lambda": block.Lambda, "slope_sup": block.slope_sup}
        values = {}
        for key, value in given.items():
            if value is None:
                if key not in measured:
                    raise ConfigError(f"modulus block needs '{key}' when no scenario is given")
                value = measured[key]
            values[key] = value
        if values["Lambda"] < values["lambda"]:
            raise ConfigError(f"Lambda = {values['Lambda']:g} is below lambda = {values['lambda']:g}")
        return values["lambda"], values["Lambda"], values["slope_sup"]

    def explicit_spec(self, lambda_: float, Lambda: float, slope_sup: float) -> ModulusSpec:
        block = self.modulus_block
        return ModulusSpec(
            family=block.family,
            delta=block.delta,
            gamma=block.gamma,
            eps=block.eps,
            amplitude=block.amplitude,
            A=block.A,
            M=block.M,
            lambda_=lambda_,
            Lambda=Lambda,
            slope_sup=slope_sup,
        )

    def search(self, lambda_: float, Lambda: float, slope_sup: float) -> FeasibilityResult:
        block = self.modulus_block
        return feasibility_search(
            block.A,
            lambda_,
            Lambda,
            slope_sup,
            family=block.family,
            eps=block.eps,
            exponents=block.exponents,
            grid_points=block.grid_points,
        )

    def with_amplitude(self, spec: ModulusSpec) -> ModulusSpec:
        return spec.model_copy(update={"amplitude": self.modulus_block.amplitude})

    # simulate

    def resolve_modulus(self, bounds: EllipticityBounds) -> Tuple[Optional[ModulusSpec], Optional[FeasibilityResult]]:
        """The rho handed to the modulus-dependent monitors, or None when there is none."""
        block = self.modulus_block
        if not bounds.elliptic and block.lambda_ is None:
            logger.warning(f"initial beta = {bounds.beta:.4f} >= 1: no modulus, conditional monitors will skip")
            return None, None

        lambda_, Lambda, slope_sup = self.ellipticity_inputs(bounds)
        if block.mode == "explicit":
            return rho_from_omega(self.explicit_spec(lambda_, Lambda, slope_sup)), None

        result = self.search(lambda_, Lambda, slope_sup)
        if not result.feasible:
            logger.warning(f"No feasible modulus ({result.report.reason}); modulus monitors will skip")
            return None, result
        return rho_from_omega(self.with_amplitude(result.spec)), result

    def simulate(self) -> int:
        rc = self.run_config
        stepper = rc.effective_stepper
        state = self.initial_state()
        out = self.open_output()
        bounds = self.measure(state)

        modulus, search = self.resolve_modulus(bounds)
        if search is not None:
            write_json(feasibility_record(search), out / "feasibility.json")
        if modulus is not None:
            write_json(modulus_record(modulus), out / "modulus.json")

        monitors = build_monitors(rc.monitors.enabled, rc.monitors.tolerances)
        outcome = "completed"
        try:
            trajectory = simulate(state, stepper, rc.quadrature, monitors, modulus, self.modulus_block.time_offset)
        except BlowUpError as e:
            logger.error(f"Simulation aborted: {e}")
            outcome = "blow-up"
            trajectory = e.trajectory if e.trajectory is not None else Trajectory.start(state)
            if e.state is not None:
                write_state_csv(e.state, out / "blowup_state.csv")

        meta = {
            **trajectory.meta,
            "schema_version": rc.schema_version,
            "config": rc.to_meta(),
            "outcome": outcome,
            "initial_beta": bounds.beta,
        }
        trajectory = Trajectory(trajectory.snapshots, trajectory.records, meta)
        save_trajectory(trajectory, out, rc.quadrature.scheme_for(state.grid))

        summary = certificate(trajectory, rc.monitors.enabled, bounds.beta, modulus, outcome)
        write_json(summary, out / "certificate.json")
        logger.info(f"Artifacts written to {out}")

        click.echo(f"Run {outcome} at t = {trajectory.final.t:.6g} ({len(trajectory)} snapshots), beta0 = {bounds.beta:.6g}")
        for name, verdict in summary["monitors"].items():
            margin = verdict.get("worst_margin")
            shown = f"worst margin {margin:.3e}" if margin is not None else "; ".join(verdict.get("notes", []))
            click.echo(f"  {GLYPHS[verdict['status']]} {name}: {shown}")

        if outcome != "completed":
            return EXIT_BLOWUP
        return EXIT_FAILED if summary["failed_monitors"] else EXIT_OK

    # certify-modulus

    def scaling_check(self, spec: ModulusSpec) -> float:
        """Worst rescaling-covariance gap over dyadic and non-dyadic factors."""
        return max(rescaling_gap(spec, r) for r in SCALING_FACTORS)

    def certify_modulus(self) -> int:
        rc = self.run_config
        if rc.modulus is None:
            raise ConfigError("certify-modulus needs a modulus block")
        block = rc.modulus
        bounds = self.measure(self.initial_state()) if rc.scenario is not None else None
        lambda_, Lambda, slope_sup = self.ellipticity_inputs(bounds)
        out = self.open_output()

        extra: Dict[str, Any] = {
            "mode": block.mode,
            "inputs": {"A": block.A, "lambda": lambda_, "Lambda": Lambda, "slope_sup": slope_sup},
        }
        if block.mode == "explicit":
            spec = self.explicit_spec(lambda_, Lambda, slope_sup)
            result = FeasibilityResult(feasible=True, spec=spec, binding_constraint="explicit")
        else:
            result = self.search(lambda_, Lambda, slope_sup)
            if not result.feasible:
                write_json(feasibility_record(result, extra), out / "feasibility.json")
                click.echo(f"❌ infeasible: {result.report.reason} (binding: {result.binding_constraint})")
                return EXIT_FAILED
            spec = self.with_amplitude(result.spec)

        xis = verification_grid(spec, block.grid_points)
        margins = margins_frame(spec, xis)
        write_frame(margins, out / "margins.csv")
        worst = int(margins["total_margin"].idxmin())
        positive = bool((margins["total_margin"] > 0).all())
        extra.update(
            {
                "all_margins_positive": positive,
                "min_margin": float(margins["total_margin"].iloc[worst]),
                "worst_xi": float(margins["xi"].iloc[worst]),
                "min_reduced_margin": float(margins["reduced_margin"].min()),
                "scaling_check": self.scaling_check(spec),
            }
        )

        if block.compare_unit_lambda:
            reference = feasibility_search(
                block.A,
                1.0,
                max(1.0, Lambda),
                slope_sup,
                family=block.family,
                eps=block.eps,
                exponents=block.exponents,
                grid_points=block.grid_points,
            )
            if reference.feasible:
                extra["unit_lambda_gamma"] = reference.spec.gamma
                extra["gamma_ratio_to_unit_lambda"] = spec.gamma / reference.spec.gamma
                logger.info(f"gamma / gamma(lambda = 1) = {spec.gamma / reference.spec.gamma:.3e}")

        write_json(feasibility_record(result, extra), out / "feasibility.json")
        rho_spec = rho_from_omega(spec)
        write_json({"omega": modulus_record(spec), "rho": modulus_record(rho_spec)}, out / "modulus.json")

        glyph = "✅" if positive else "❌"
        click.echo(
            f"{glyph} delta = {spec.delta:.6g}, gamma = {spec.gamma:.6g}, "
            f"min margin {extra['min_margin']:.3e} at xi = {extra['worst_xi']:.3e}, C = {rho_spec.C:.6g}"
        )
        if "gamma_ratio_to_unit_lambda" in extra:
            click.echo(f"  gamma ratio to the lambda = 1 case: {extra['gamma_ratio_to_unit_lambda']:.3e}")
        return EXIT_OK if positive else EXIT_FAILED


def _with_executor(config_path: Path, output_dir: Optional[Path], body: Callable[[RunExecutor], int]) -> int:
    executor = RunExecutor(load_run_config(config_path), output_dir)
    try:
        return body(executor)
    finally:
        executor.close_output()


def cmd_simulate(config_path: Path, output_dir: Optional[Path] = None) -> int:
    return _guarded("simulate", lambda: _with_executor(config_path, output_dir, RunExecutor.simulate))


def cmd_certify_modulus(config_path: Path, output_dir: Optional[Path] = None) -> int:
    return _guarded("certify-modulus", lambda: _with_executor(config_path, output_dir, RunExecutor.certify_modulus))


# inspect


def _kernel_dump(state: InterfaceState, q: QuadratureSpec, nodes: int, offsets: int) -> pd.DataFrame:
    grid = state.grid
    magnitudes = np.geomspace(grid.dx / 2, q.radius(grid) / 2, max(offsets // 2, 1))
    hs = np.concatenate([-magnitudes[::-1], magnitudes])
    node_ids = np.unique(np.round(np.linspace(0, grid.n - 1, nodes)).astype(int))
    frame = pd.DataFrame([sample.model_dump() for sample in kernel_samples(state, node_ids, hs, q)])
    frame["h2_K"] = frame["h"] ** 2 * frame["K_value"]
    frame["h3_k_half"] = np.abs(frame["h"]) ** 3 * np.sign(frame["h"]) * frame["k_value"] / 2
    return frame


def inspect_state(
    state_path: Path,
    kernel: bool = False,
    rhs: bool = False,
    output_dir: Optional[Path] = None,
    q: Optional[QuadratureSpec] = None,
    nodes: int = 16,
    offsets: int = 32,
) -> int:
    state_path = Path(state_path)
    state = read_state_csv(state_path)
    q = q or QuadratureSpec()
    grid = state.grid
    try:
        q.radius(grid)
    except QuadratureError as e:
        raise ConfigError(str(e)) from e
    slopes = slope(state, q.scheme_for(grid))
    bounds = beta_of(slopes)

    click.echo(f"State {state_path.name}: n = {grid.n}, dx = {grid.dx:g}, t = {state.t:.6g}, {grid.boundary_mode.value}")
    click.echo(f"  beta       = {bounds.beta:.10g}")
    click.echo(f"  lambda     = {bounds.lambda_:.10g}")
    click.echo(f"  Lambda     = {bounds.Lambda:.10g}")
    click.echo(f"  sup f_x    = {bounds.sup_fx:.10g}")
    click.echo(f"  inf f_x    = {bounds.inf_fx:.10g}")
    click.echo(f"  max|f_xx|  = {float(np.max(np.abs(slopes.fxx))):.10g}")
    if not grid.periodic:
        click.echo(f"  boundary drift = {state.boundary_drift():.3e}")
    if not (kernel or rhs):
        return EXIT_OK

    out = Path(output_dir) if output_dir is not None else state_path.parent
    out.mkdir(parents=True, exist_ok=True)
    sidecar = {
        "state": state_path.name,
        "t": state.t,
        "quadrature": q.describe(grid),
        "beta": bounds.beta,
        "lambda": bounds.lambda_,
        "Lambda": bounds.Lambda,
    }

    if kernel:
        frame = _kernel_dump(state, q, nodes, offsets)
        path = write_dump(frame, sidecar, out / f"{state_path.stem}_kernel")
        click.echo(f"  kernel samples ({len(frame)}) -> {path}")

    if rhs:
        direct = muskat_rhs(state, q)
        original = muskat_rhs_original(state, q)
        difference = direct - original
        frame = pd.DataFrame({"x": state.x, "rhs": direct, "rhs_original": original, "difference": difference})
        tolerance = max(10 * grid.dx ** 2, config.QUADRATURE_TOLERANCE)
        largest = float(np.max(np.abs(difference)))
        path = write_dump(
            frame,
            {**sidecar, "max_abs_difference": largest, "tolerance": tolerance},
            out / f"{state_path.stem}_rhs",
        )
        glyph = "✅" if largest <= tolerance else "❌"
        click.echo(f"  {glyph} max|rhs - rhs_original| = {largest:.3e} (tolerance {tolerance:.1e}) -> {path}")
    return EXIT_OK


def cmd_inspect(
    state_path: Path,
    kernel: bool = False,
    rhs: bool = False,
    output_dir: Optional[Path] = None,
    q: Optional[QuadratureSpec] = None,
) -> int:
    return _guarded("inspect", lambda: inspect_state(state_path, kernel, rhs, output_dir, q))
