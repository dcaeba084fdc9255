"""Reduced objectives over the polynomial coefficients of a potential.

Two objectives are provided: the modified Calabi energy
``4π² ∫_P (S - S_target)² dx`` and the conformal-defect energy
``4π² ∫_P (κ - T³ - 6 T Δ_u T + 12 |∇_u T|²)² dx`` where ``T`` is the affine
target.  Both come with analytic coefficient gradients.  The Calabi energy is
also exposed as a weighted residual vector for least-squares solvers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleIntegrandError, InvalidParameterError
from .polytope import ExtremalAffineTarget, MomentPolytope
from .potential import MonomialBasis, PointEvaluator, SymplecticPotential
from .quadrature import PolytopeQuadrature

FOUR_PI_SQ = 4.0 * math.pi ** 2


@dataclass(frozen=True)
class ObjectiveEval:
    value: float
    gradient: np.ndarray | None
    feasible: bool = True

    @classmethod
    def infeasible(cls) -> "ObjectiveEval":
        return cls(math.inf, None, False)


@dataclass(frozen=True)
class ResidualVector:
    """Entries ``sqrt(w_i) (S - S_target)(p_i)`` and optionally their
    coefficient Jacobian."""

    residuals: np.ndarray
    jacobian: np.ndarray | None = None
    feasible: bool = True

    @property
    def sum_of_squares(self) -> float:
        return float(self.residuals @ self.residuals)


def volume_normalisation(poly: MomentPolytope) -> float:
    """``1/area``; on the CLW pentagon this is ``2/(a² + 2a - 1)``."""
    return 1.0 / poly.area


def laplacian_of_affine(G_derivative, grad) -> np.ndarray:
    """``Δ_u f = Σ_i d_i (u^{ij} d_j f)`` for affine ``f`` with gradient ``grad``."""
    return np.einsum("niij,j->n", G_derivative, grad)


def conformal_defect_terms(target: ExtremalAffineTarget, kappa: float, points, G, dG):
    """Pointwise ``(defect, S, |∇S|², ΔS)`` of the conformal identity
    ``S³ + 6 S ΔS - 12 |∇S|² = κ`` for ``S`` the affine target."""
    g = target.gradient
    S = target(points)
    grad_sq = np.einsum("a,nab,b->n", g, G, g)
    lap = laplacian_of_affine(dG, g)
    defect = kappa - S ** 3 - 6.0 * S * lap + 12.0 * grad_sq
    return defect, S, grad_sq, lap


class _Objective:
    """Shared state: a :class:`PointEvaluator` bound to a quadrature scheme."""

    def __init__(self, polytope: MomentPolytope, basis: MonomialBasis,
                 target: ExtremalAffineTarget, scheme: PolytopeQuadrature):
        self.polytope = polytope
        self.basis = basis
        self.target = target
        self.scheme = scheme
        self.evaluator = PointEvaluator(polytope, basis, scheme.points)
        self.target_values = target(scheme.points)
        self.n_evaluations = 0

    @property
    def size(self) -> int:
        return len(self.basis)

    def _inverse(self, coeffs):
        self.n_evaluations += 1
        if not np.all(self.evaluator.feasible(coeffs)):
            return None
        return self.evaluator.inverse_jet(coeffs)


class CalabiObjective(_Objective):
    """``c -> ObjectiveEval`` for the modified Calabi energy."""

    def __call__(self, coeffs, gradient: bool = True) -> ObjectiveEval:
        inv = self._inverse(coeffs)
        if inv is None:
            return ObjectiveEval.infeasible()
        G, dG, d2G = inv
        diff = -np.einsum("nijij->n", d2G) - self.target_values
        w = self.scheme.weights
        value = FOUR_PI_SQ * float(w @ diff ** 2)
        if not math.isfinite(value):
            return ObjectiveEval.infeasible()
        grad = None
        if gradient:
            J = self.evaluator.jacobian_from_inverse(G, dG, d2G)
            grad = 2.0 * FOUR_PI_SQ * ((w * diff) @ J)
        return ObjectiveEval(value, grad)

    def residuals(self, coeffs, jacobian: bool = True) -> ResidualVector:
        inv = self._inverse(coeffs)
        if inv is None:
            return ResidualVector(np.full(len(self.scheme), math.inf), None, False)
        G, dG, d2G = inv
        sw = np.sqrt(self.scheme.weights)
        r = sw * (-np.einsum("nijij->n", d2G) - self.target_values)
        J = None
        if jacobian:
            J = sw[:, None] * self.evaluator.jacobian_from_inverse(G, dG, d2G)
        return ResidualVector(r, J, bool(np.all(np.isfinite(r))))


class ConformalObjective(_Objective):
    """``c -> ObjectiveEval`` for the squared conformal defect.

    Only first derivatives of the inverse Hessian enter, so no curvature is
    formed.
    """

    def __init__(self, polytope, basis, target, scheme, kappa: float):
        if not kappa > 0:
            raise InvalidParameterError("kappa must be positive")
        super().__init__(polytope, basis, target, scheme)
        self.kappa = float(kappa)

    def _defect(self, coeffs, jacobian):
        self.n_evaluations += 1
        ev = self.evaluator
        if not np.all(ev.feasible(coeffs)):
            return None, None
        G, dG, _ = ev.inverse_jet(coeffs)
        D, S, _, _ = conformal_defect_terms(self.target, self.kappa, self.scheme.points, G, dG)
        if not jacobian:
            return D, None
        g = self.target.gradient
        Gg = G @ g
        dGg = np.einsum("nkab,b->nka", dG, g)
        v = np.einsum("niia->na", dG)
        # d|∇S|²/dc = -(Gg)^T B (Gg)
        dQ = -np.einsum("na,nmab,nb->nm", Gg, ev.B, Gg)
        # dΔS/dc = -Σ_ij g_j d_i(G B G)_ij
        P0 = -(np.einsum("na,nb->nab", v, Gg) + np.einsum("nia,nib->nab", G, dGg))
        P1 = -np.einsum("nia,nb->niab", G, Gg)
        dL = (np.einsum("nab,nmab->nm", P0, ev.B)
              + np.einsum("nkab,nmkab->nm", P1, ev.dB))
        return D, (-6.0 * S)[:, None] * dL + 12.0 * dQ

    def __call__(self, coeffs, gradient: bool = True) -> ObjectiveEval:
        D, dD = self._defect(coeffs, gradient)
        if D is None:
            return ObjectiveEval.infeasible()
        w = self.scheme.weights
        value = FOUR_PI_SQ * float(w @ D ** 2)
        if not math.isfinite(value):
            return ObjectiveEval.infeasible()
        grad = 2.0 * FOUR_PI_SQ * ((w * D) @ dD) if gradient else None
        return ObjectiveEval(value, grad)

    def residuals(self, coeffs, jacobian: bool = True) -> ResidualVector:
        D, dD = self._defect(coeffs, jacobian)
        if D is None:
            return ResidualVector(np.full(len(self.scheme), math.inf), None, False)
        sw = np.sqrt(self.scheme.weights)
        J = sw[:, None] * dD if jacobian else None
        r = sw * D
        return ResidualVector(r, J, bool(np.all(np.isfinite(r))))


# ---------------------------------------------------------------------------
# potential-level API


def _calabi(u, target, scheme):
    return CalabiObjective(u.polytope, u.basis, target, scheme)


def modified_calabi(u: SymplecticPotential, target: ExtremalAffineTarget,
                    scheme: PolytopeQuadrature) -> ObjectiveEval:
    return _calabi(u, target, scheme)(u.coeffs)


def conformal_objective(u: SymplecticPotential, target: ExtremalAffineTarget,
                        kappa: float, scheme: PolytopeQuadrature) -> ObjectiveEval:
    return ConformalObjective(u.polytope, u.basis, target, scheme, kappa)(u.coeffs)


def residual_vector(u: SymplecticPotential, target: ExtremalAffineTarget,
                    scheme: PolytopeQuadrature, jacobian: bool = False) -> ResidualVector:
    res = _calabi(u, target, scheme).residuals(u.coeffs, jacobian)
    if not res.feasible:
        raise InfeasibleIntegrandError("Hessian is indefinite at a quadrature node")
    return res


def l2_error(u: SymplecticPotential, target: ExtremalAffineTarget,
             scheme: PolytopeQuadrature) -> float:
    """Volume-normalised L² norm of ``S - S_target``; ``inf`` if infeasible."""
    ev = modified_calabi(u, target, scheme)
    if not ev.feasible:
        return math.inf
    return math.sqrt(ev.value / FOUR_PI_SQ * volume_normalisation(u.polytope))


def beta_residual(u: SymplecticPotential, target: ExtremalAffineTarget, kappa: float,
                  scheme: PolytopeQuadrature) -> float:
    """Volume-normalised L² norm of the conformal defect; ``inf`` if infeasible."""
    ev = ConformalObjective(u.polytope, u.basis, target, scheme, kappa)(u.coeffs, gradient=False)
    if not ev.feasible:
        return math.inf
    return math.sqrt(ev.value / FOUR_PI_SQ * volume_normalisation(u.polytope))
