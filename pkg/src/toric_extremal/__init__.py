"""Numerical extremal toric Kähler metrics on Delzant polygons."""
from .diagnostics import (
    DiagnosticsRow,
    EigenAnsatz,
    EinsteinConstants,
    StabilityReport,
    diagnostics_row,
    einstein_constants,
    gradient_norm_oracle,
    rayleigh_minimize,
    rayleigh_value,
    stability_report,
)
from .estimator import ExtremalPotential
from .exceptions import ToricError
from .functionals import beta_residual, conformal_objective, l2_error, modified_calabi, residual_vector
from .optim import CgConfig, LmConfig, OptimReport, SweepProblem, Termination, cg_minimize, degree_sweep, lm_minimize
from .polytope import (
    CLW_A,
    ExtremalAffineTarget,
    MomentPolytope,
    build_clw_pentagon,
    build_square,
    solve_extremal_affine,
)
from .potential import MonomialBasis, SymplecticPotential, load_coefficients, save_coefficients, scalar_curvature
from .quadrature import PolytopeQuadrature, clw_split_scheme, gauss_legendre, triangulated_scheme

__version__ = "0.1.0"
