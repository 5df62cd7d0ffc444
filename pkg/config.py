"""Configuration settings for the Muskat laboratory."""

import os
from typing import Final
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Parallelism
MUSKAT_THREADS: Final[int] = int(os.getenv("MUSKAT_THREADS", "0"))
NODE_CHUNK: Final[int] = int(os.getenv("MUSKAT_NODE_CHUNK", "64"))

# Numerical defaults
BOUNDARY_TOLERANCE: Final[float] = float(os.getenv("MUSKAT_BOUNDARY_TOLERANCE", "1e-6"))
QUADRATURE_TOLERANCE: Final[float] = float(os.getenv("MUSKAT_QUADRATURE_TOLERANCE", "1e-2"))
DEFAULT_CFL: Final[float] = float(os.getenv("MUSKAT_DEFAULT_CFL", "0.4"))
DEFAULT_MODULUS_A: Final[float] = float(os.getenv("MUSKAT_MODULUS_A", "1.0"))
PAIR_SUBSAMPLE_CAP: Final[int] = int(os.getenv("MUSKAT_PAIR_SUBSAMPLE_CAP", "512"))

# Logging
LOG_LEVEL: Final[str] = os.getenv("LOG_LEVEL", "INFO")
LOG_TO_FILE: Final[bool] = os.getenv("LOG_TO_FILE", "true").lower() == "true"

# Development
DEBUG: Final[bool] = os.getenv("DEBUG", "false").lower() == "true"


def effective_threads() -> int:
    """Worker threads for node-parallel evaluation (0 means one per CPU)."""
    if MUSKAT_THREADS > 0:
        return MUSKAT_THREADS
    return os.cpu_count() or 1


# Validation
def validate_config() -> list[str]:
    """Validate configuration and return a list of problems."""
    errors = []

    if MUSKAT_THREADS < 0:
        errors.append("MUSKAT_THREADS must be >= 0 (0 = auto)")

    if NODE_CHUNK < 1:
        errors.append("MUSKAT_NODE_CHUNK must be >= 1")

    if BOUNDARY_TOLERANCE <= 0:
        errors.append("MUSKAT_BOUNDARY_TOLERANCE must be positive")

    if not 0 < QUADRATURE_TOLERANCE < 1:
        errors.append("MUSKAT_QUADRATURE_TOLERANCE must lie in (0, 1)")

    if not 0 < DEFAULT_CFL <= 1:
        errors.append("MUSKAT_DEFAULT_CFL must lie in (0, 1]")

    if DEFAULT_MODULUS_A <= 0:
        errors.append("MUSKAT_MODULUS_A must be positive")

    if PAIR_SUBSAMPLE_CAP < 2:
        errors.append("MUSKAT_PAIR_SUBSAMPLE_CAP must be >= 2")

    if LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        errors.append(f"LOG_LEVEL '{LOG_LEVEL}' is not a logging level")

    return errors


def get_config_summary() -> dict:
    """Get a summary of the effective configuration."""
    return {
        "muskat_threads": MUSKAT_THREADS,
        "effective_threads": effective_threads(),
        "node_chunk": NODE_CHUNK,
        "boundary_tolerance": BOUNDARY_TOLERANCE,
        "quadrature_tolerance": QUADRATURE_TOLERANCE,
        "default_cfl": DEFAULT_CFL,
        "default_modulus_A": DEFAULT_MODULUS_A,
        "pair_subsample_cap": PAIR_SUBSAMPLE_CAP,
        "log_level": LOG_LEVEL,
        "log_to_file": LOG_TO_FILE,
        "debug": DEBUG,
    }
