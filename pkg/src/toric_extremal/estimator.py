"""scikit-learn style front end.

``ExtremalPotential`` fits a restricted symplectic potential on a CLW
pentagon; ``predict`` returns scalar curvature and ``transform`` its
deviation from the extremal affine target.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .diagnostics import einstein_constants
from .exceptions import InvalidParameterError
from .functionals import l2_error
from .optim import CgConfig, LmConfig, SweepProblem, Termination, degree_sweep
from .polytope import CLW_A, build_clw_pentagon, solve_extremal_affine
from .potential import PointEvaluator, SymplecticPotential
from .quadrature import OPTIMIZE_ORDER, clw_split_scheme


def check_points(X) -> np.ndarray:
    """Validate an ``(N, 2)`` array of finite polytope coordinates."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise InvalidParameterError(f"expected points of shape (N, 2), got {X.shape}")
    return X


class ExtremalPotential(BaseEstimator):
    """Restricted extremal potential on the CLW pentagon with parameter ``a``.

    Parameters
    ----------
    a : float
        Class parameter of the pentagon.
    degree : int
        Truncation degree of the polynomial part (>= 2).
    method : {"lm", "cg"}
    objective : {"calabi", "conformal"}
    quad_order : int
        Gauss points per direction on each piece of the split rule.
    warm_start : bool
        Sweep degrees ``2..degree``, seeding each from the previous optimum.
    symmetric : bool
        Restrict to potentials invariant under swapping ``x1`` and ``x2``.

    Attributes (after ``fit``)
    --------------------------
    potential_, coef_, target_, polytope_, report_, reports_, n_iter_, kappa_
    """

    def __init__(self, a: float = CLW_A, degree: int = 4, method: str = "lm",
                 objective: str = "calabi", quad_order: int = OPTIMIZE_ORDER,
                 warm_start: bool = True, symmetric: bool = True):
        self.a = a
        self.degree = degree
        self.method = method
        self.objective = objective
        self.quad_order = quad_order
        self.warm_start = warm_start
        self.symmetric = symmetric

    def _validate_params(self):
        if not (isinstance(self.degree, (int, np.integer)) and self.degree >= 2):
            raise InvalidParameterError(f"degree must be an integer >= 2, got {self.degree!r}")
        if self.method not in ("lm", "cg"):
            raise InvalidParameterError(f"method must be 'lm' or 'cg', got {self.method!r}")
        if self.objective not in ("calabi", "conformal"):
            raise InvalidParameterError(f"unknown objective {self.objective!r}")
        if not 2 <= self.quad_order <= 64:
            raise InvalidParameterError("quad_order must lie in [2, 64]")

    def fit(self, X=None, y=None, cg: CgConfig | None = None, lm: LmConfig | None = None):
        """Minimise the chosen objective.  ``X`` and ``y`` are ignored; the
        problem is fully determined by the parameters."""
        self._validate_params()
        poly = build_clw_pentagon(self.a)
        target = solve_extremal_affine(poly)
        scheme = clw_split_scheme(poly, self.quad_order)
        kappa = None
        if self.objective == "conformal":
            kappa = einstein_constants(target, scheme).kappa
        problem = SweepProblem(poly, target, scheme, self.objective, kappa, self.symmetric)
        degrees = range(2, self.degree + 1) if self.warm_start else [self.degree]
        reports = degree_sweep(problem, degrees, self.method, cg, lm)
        final = reports[-1]
        if final.termination in (Termination.ERROR, Termination.INFEASIBLE_START):
            raise RuntimeError(f"fit failed at degree {self.degree}: {final.message}")

        self.polytope_ = poly
        self.target_ = target
        self.kappa_ = kappa
        self.scheme_ = scheme
        self.potential_ = SymplecticPotential(poly, problem.basis(self.degree), final.final_coeffs)
        self.coef_ = self.potential_.coeffs
        self.report_ = final
        self.reports_ = reports
        self.n_iter_ = final.iterations
        return self

    def predict(self, X) -> np.ndarray:
        """Scalar curvature at interior points."""
        check_is_fitted(self, "potential_")
        X = check_points(X)
        ev = PointEvaluator(self.polytope_, self.potential_.basis, X)
        return ev.curvature(self.coef_, strict=True)

    def transform(self, X) -> np.ndarray:
        """``S - S_target`` at interior points, as a column."""
        return (self.predict(X) - self.target_(check_points(X)))[:, None]

    def score(self, X=None, y=None) -> float:
        """Negative volume-normalised L² error over the fit quadrature."""
        check_is_fitted(self, "potential_")
        err = l2_error(self.potential_, self.target_, self.scheme_)
        return -err if math.isfinite(err) else -math.inf
