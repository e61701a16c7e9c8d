# settings.py - constants, environment overrides and logging setup
import os
import logging

from errors import ConfigError

# Tolerances
SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-15
JACOBI_MAX_SWEEPS = 100
POLAR_TOL = 1e-12
POLAR_MAX_ITER = 200
POLAR_ZERO = 1e-300
QUAD_TOL = 1e-8
COMMUTE_TOL = 1e-10

# Spatial quadrature
GAUSS_NODES = 10
MAX_SHELLS = 64
MIN_DIVERGENCE_DEPTH = 6
DIVERGENCE_RUN = 4
MAX_REFINE_LEVEL = 40

# Cube sup
CUBE_GRID = 33
GOLDEN_ITERS = 12

# Norm bisection
NORM_REL_WIDTH = 1e-6
NORM_POSTCHECK = 1e-3

# Probe sets
PROBE_RADIUS_EXP = 10
N_RANDOM_PROBES = 1000

# Sampling
DEFAULT_N_TERMS = 1000
CELL_N_TERMS = 64
SAMPLE_CHUNK = 2048
GOF_MIN_N = 100
GOF_Z = 3.5
GOF_BAND = (0.05, 3.0)      # range of |psi| at the law-scaled test points
INDEPENDENCE_Z = 5.0

# Tangent sweeps
SWEEP_TOL = 1e-2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def get_threads():
    """Worker count from OPSTABLE_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("OPSTABLE_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError("OPSTABLE_THREADS", f"expected a positive integer, got {raw!r}")
    if value < 1:
        raise ConfigError("OPSTABLE_THREADS", f"expected a positive integer, got {raw!r}")
    return value


def get_quad_tol(default=QUAD_TOL):
    """Quadrature tolerance, overridable through OPSTABLE_TOL."""
    raw = os.environ.get("OPSTABLE_TOL")
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError("OPSTABLE_TOL", f"expected a real number, got {raw!r}")
    if not (0.0 < value < 1e-2):
        raise ConfigError("OPSTABLE_TOL", f"tolerance {value} outside (0, 1e-2)")
    return value


def setup_logging(level=logging.INFO):
    log_file = os.environ.get("OPSTABLE_LOG_FILE")
    if log_file:
        logging.basicConfig(filename=log_file, level=level, format=LOG_FORMAT)
    else:
        logging.basicConfig(level=level, format=LOG_FORMAT)
    return logging.getLogger("opstable")
