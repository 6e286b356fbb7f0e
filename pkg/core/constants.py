"""
Shared constants for yamabe-flow-lab.

Centralizes numerical defaults, file names and exit codes used across
multiple modules to ensure consistency and ease of maintenance.
"""

# Grid limits
MIN_DIMENSION = 3
MIN_NODES_PER_AXIS = 8

# Conformal factors below this value abort a run
POSITIVITY_FLOOR = 1e-12

# Inequality tolerances (absolute + relative, surfaced in every report)
DEFAULT_TOL_ABS = 1e-6
DEFAULT_TOL_REL = 1e-6

# Slack for monotone monitors (r for normalized runs, total scalar otherwise)
MONOTONE_SLACK = 1e-10

# Denominator floor for relative residuals
RESIDUAL_FLOOR = 1e-12

# C[psi]: nodes with psi <= PSI_ZERO_REL * max(psi) count as zeros of psi
PSI_ZERO_REL = 1e-12
PSI_LAPLACIAN_TOL = 1e-10

# Classical RK4 reaches the negative real axis at about -2.785
RK4_STABILITY_RADIUS = 2.78
DEFAULT_STABILITY_SAFETY = 0.9
DEFAULT_RESTABILIZE_EVERY = 100

# Recent u_min values echoed in abort diagnostics
ABORT_HISTORY_LENGTH = 10

# Closedness experiments: relative gap between the first two samples of the
# limit run, and the allowed volume ratio between a member and the limit
INITIAL_CONTINUITY_TOL = 1e-4
VOLUME_COMPARABILITY_FACTOR = 2.0
BUMP_PEAK_FRACTION = 0.99

# Random smooth starts for the Yamabe constant estimate
DEFAULT_YAMABE_STARTS = 4
DEFAULT_YAMABE_AMPLITUDE = 0.2
DEFAULT_YAMABE_MAX_MODE = 1

# Per-field CSV export is refused above this many nodes
CSV_MAX_NODES = 65536

# Binary field container
FIELD_CONTAINER_MAGIC = b"YFLF"
FIELD_CONTAINER_VERSION = 2

# Artifact file names
BACKGROUND_FIELDS_FILE = "background.bin"
BACKGROUND_MANIFEST_FILE = "background.manifest"
SERIES_CSV_FILE = "series.csv"
RUN_MANIFEST_FILE = "run.json"
SNAPSHOTS_FILE = "snapshots.bin"
CHECK_REPORT_FILE = "checks.json"
CHECK_TABLE_FILE = "checks.txt"
EXPERIMENT_REPORT_FILE = "report.json"
DISTANCES_CSV_FILE = "distances.csv"
YAMABE_REPORT_FILE = "yamabe.json"

# CLI exit codes (stable contract)
EXIT_SUCCESS = 0
EXIT_CONCLUSION_FAILURE = 1
EXIT_HYPOTHESIS_FAILURE = 2
EXIT_NUMERICAL_ABORT = 3
EXIT_USAGE_ERROR = 4

# Worker threads when neither --threads nor YFL_THREADS is given
MAX_DEFAULT_THREADS = 8

# Logging configuration (env defaults; single source of truth)
DEFAULT_LOG_LEVEL = "INFO"
DEFAULT_LOG_MAX_SIZE_MB = 5
DEFAULT_LOG_BACKUP_COUNT = 5
DEFAULT_LOG_RETENTION_DAYS = 30
DEFAULT_LOG_TO_FILE = True

# Environment variables are read as YFL_<FIELD>
ENV_PREFIX = "YFL_"

__all__ = [
    "MIN_DIMENSION",
    "MIN_NODES_PER_AXIS",
    "POSITIVITY_FLOOR",
    "DEFAULT_TOL_ABS",
    "DEFAULT_TOL_REL",
    "MONOTONE_SLACK",
    "RESIDUAL_FLOOR",
    "PSI_ZERO_REL",
    "PSI_LAPLACIAN_TOL",
    "RK4_STABILITY_RADIUS",
    "DEFAULT_STABILITY_SAFETY",
    "DEFAULT_RESTABILIZE_EVERY",
    "ABORT_HISTORY_LENGTH",
    "INITIAL_CONTINUITY_TOL",
    "VOLUME_COMPARABILITY_FACTOR",
    "BUMP_PEAK_FRACTION",
    "DEFAULT_YAMABE_STARTS",
    "DEFAULT_YAMABE_AMPLITUDE",
    "DEFAULT_YAMABE_MAX_MODE",
    "CSV_MAX_NODES",
    "FIELD_CONTAINER_MAGIC",
    "FIELD_CONTAINER_VERSION",
    "BACKGROUND_FIELDS_FILE",
    "BACKGROUND_MANIFEST_FILE",
    "SERIES_CSV_FILE",
    "RUN_MANIFEST_FILE",
    "SNAPSHOTS_FILE",
    "CHECK_REPORT_FILE",
    "CHECK_TABLE_FILE",
    "EXPERIMENT_REPORT_FILE",
    "DISTANCES_CSV_FILE",
    "YAMABE_REPORT_FILE",
    "EXIT_SUCCESS",
    "EXIT_CONCLUSION_FAILURE",
    "EXIT_HYPOTHESIS_FAILURE",
    "EXIT_NUMERICAL_ABORT",
    "EXIT_USAGE_ERROR",
    "MAX_DEFAULT_THREADS",
    "DEFAULT_LOG_LEVEL",
    "DEFAULT_LOG_MAX_SIZE_MB",
    "DEFAULT_LOG_BACKUP_COUNT",
    "DEFAULT_LOG_RETENTION_DAYS",
    "DEFAULT_LOG_TO_FILE",
    "ENV_PREFIX",
]
