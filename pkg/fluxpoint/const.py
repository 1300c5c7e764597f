from enum import IntEnum

DOMAIN = "fluxpoint"

# Point cloud layout, in units of the smoothing length h
DEFAULT_R_MIN = 0.2
DEFAULT_R_MAX = 0.45
DEFAULT_BETA = 0.85
DEFAULT_SPACING = 0.35
DEFAULT_BOUNDARY_SPACING = 0.35
DEFAULT_JITTER = 0.1
DEFAULT_V_REF = 1.0
DEFAULT_SEED = 20170101

# Stencils
MONOMIAL_ORDER = 2
PIVOT_RATIO_LIMIT = 1e12
CONSTRAINT_RTOL = 1e-10
DEFAULT_WEIGHT_EXPONENT = 1

# Cells
FACE_AREA_FLOOR = 1e-12

# Krylov solver
DEFAULT_REL_TOL = 1e-9
DEFAULT_MAX_ITER = 2000

METHOD_CLASSICAL = "classical"
METHOD_FC = "fc"
METHODS = (METHOD_CLASSICAL, METHOD_FC)

SCENARIO_ROTATING_BLOB = "advdiff_rotating_blob"
SCENARIO_DECAYING_SHEAR = "decaying_shear"
SCENARIO_SQUARE_CYLINDER = "square_cylinder"
SCENARIO_STITCH_SPHERE = "stitch_sphere"
SCENARIOS = (
    SCENARIO_ROTATING_BLOB,
    SCENARIO_DECAYING_SHEAR,
    SCENARIO_SQUARE_CYLINDER,
    SCENARIO_STITCH_SPHERE,
)

DIAGNOSTICS_HEADER = (
    "step",
    "t",
    "dt",
    "eps_ddt",
    "div_before",
    "div_after",
    "flux_in",
    "flux_out",
    "phi_integral",
    "adv_boundary_flux",
)
DIAGNOSTICS_FILE = "diagnostics.csv"
SUMMARY_FILE = "summary.txt"
CONFIG_ECHO_FILE = "config.ini"


class PointKind(IntEnum):
    """Boundary classification of a numerical point."""

    INTERIOR = 0
    WALL = 1
    INFLOW = 2
    OUTFLOW = 3
    DIRICHLET = 4


# Lower index wins where two boundary sides meet at a corner
CORNER_KIND_PRIORITY = (
    PointKind.DIRICHLET,
    PointKind.WALL,
    PointKind.INFLOW,
    PointKind.OUTFLOW,
)
