"""Bellman iteration for linear systems with polytopic gauge costs."""

from .errors import (
    BudgetExceeded,
    CertificationFailed,
    DimensionMismatch,
    Infeasible,
    MinkowskiError,
    NonConvergence,
    NotProper,
    NotStabilizing,
)
from .geometry import (
    DEFAULT_TOL,
    HPolytope,
    Tolerances,
    VPolytope,
    gauge,
    inclusion_factor,
    irreducible,
    linear_image,
    minkowski_sum,
    polar_h_to_v,
    polar_v_to_h,
    project_fm,
    set_distance,
    support,
)
from .optim import LinearProgram, LPResult, QuadraticProgram, lp_solve, qp_min_norm

__version__ = "0.1.0"
