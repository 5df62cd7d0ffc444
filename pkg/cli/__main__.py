"""muskat command-line entry point."""

import logging
import sys
from pathlib import Path
from typing import Optional

import click

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Local imports
import config
from cli.executor import EXIT_INVALID, cmd_certify_modulus, cmd_inspect, cmd_simulate
from core.quadrature import QuadratureSpec

# Configure logging
logging.basicConfig(level=getattr(logging, config.LOG_LEVEL.upper()))
logger = logging.getLogger(__name__)


@click.group()
def main() -> None:
    """Muskat interface laboratory: simulate, certify moduli, inspect states."""
    config_errors = config.validate_config()
    if config_errors:
        logger.error("Configuration errors:")
        for error in config_errors:
            logger.error(f"  - {error}")
        sys.exit(EXIT_INVALID)


@main.command()
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option("--out", "output_dir", type=click.Path(path_type=Path), default=None, help="Override output.directory.")
def simulate(config_path: Path, output_dir: Optional[Path]) -> None:
    """Evolve the configured scenario and certify the trajectory."""
    logger.info(f"Starting simulation from {config_path}")
    sys.exit(cmd_simulate(config_path, output_dir))


@main.command("certify-modulus")
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option("--out", "output_dir", type=click.Path(path_type=Path), default=None, help="Override output.directory.")
def certify_modulus(config_path: Path, output_dir: Optional[Path]) -> None:
    """Search for a modulus and verify its inequality on the xi-grid."""
    logger.info(f"Certifying modulus from {config_path}")
    sys.exit(cmd_certify_modulus(config_path, output_dir))


@main.command()
@click.argument("state_path", type=click.Path(path_type=Path))
@click.option("--kernel", is_flag=True, help="Dump k and K on a node/offset lattice.")
@click.option("--rhs", is_flag=True, help="Dump both right-hand-side forms and their difference.")
@click.option("--out", "output_dir", type=click.Path(path_type=Path), default=None, help="Directory for dumps.")
@click.option("--radius", type=float, default=None, help="Truncation radius R (default: half the span).")
def inspect(state_path: Path, kernel: bool, rhs: bool, output_dir: Optional[Path], radius: Optional[float]) -> None:
    """Print slope statistics of a state file."""
    if radius is not None and radius <= 0:
        click.echo("❌ --radius must be positive", err=True)
        sys.exit(EXIT_INVALID)
    q = QuadratureSpec(truncation_radius=radius)
    sys.exit(cmd_inspect(state_path, kernel, rhs, output_dir, q))


if __name__ == "__main__":
    main()
