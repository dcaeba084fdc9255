"""Geometric quantities of an approximate extremal metric.

All integrals over the 4-manifold reduce to ``4π² ∫_P ... dx`` because the
torus fibres have volume ``4π²`` in symplectic coordinates.  Quantities
attached to the conformal Einstein metric ``g_e = S^-2 g`` use the affine
target ``S`` as the conformal factor.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    IndefiniteGramError,
    InfeasibleIntegrandError,
    InvalidParameterError,
    NegativeRadicandError,
)
from .functionals import (
    FOUR_PI_SQ,
    conformal_defect_terms,
    volume_normalisation,
)
from .polytope import ExtremalAffineTarget, MomentPolytope
from .potential import MonomialBasis, PointEvaluator, SymplecticPotential
from .quadrature import PolytopeQuadrature

#: Euler characteristic and signature of CP^2 # 2(-CP^2).
CLW_EULER = 5
CLW_SIGNATURE = -1

#: Spacing of the sample grid used for pointwise extrema.
GRID_SPACING = 0.01
#: Relative pull towards the centre applied to grid points on the boundary.
BOUNDARY_NUDGE = 1e-6
#: Points per batch when evaluating on large grids (bounds jet memory).
CHUNK = 2048


def _chunked(fn, X) -> np.ndarray:
    return np.concatenate([fn(X[i:i + CHUNK]) for i in range(0, max(len(X), 1), CHUNK)])


@dataclass(frozen=True)
class EinsteinConstants:
    lambda_: float
    kappa: float
    einstein_volume: float

    def to_dict(self) -> dict:
        return {"lambda": self.lambda_, "kappa": self.kappa,
                "einstein_volume": self.einstein_volume}


def einstein_constants(target: ExtremalAffineTarget, scheme: PolytopeQuadrature,
                       euler: int = CLW_EULER, signature: int = CLW_SIGNATURE) -> EinsteinConstants:
    """Einstein constant of ``S^-2 g`` from topology and two integrals of ``S``.

    ``Λ² = (96π²χ + 144π²τ - ∫S² dV) / (8 Vol(g_e))`` with
    ``Vol(g_e) = ∫ S^-4 dV``.  Only the affine target enters, so the result
    does not depend on the approximate potential.
    """
    S = target(scheme.points)
    calabi = FOUR_PI_SQ * scheme.integrate_values(S ** 2)
    volume = FOUR_PI_SQ * scheme.integrate_values(S ** -4.0)
    radicand = (96 * math.pi ** 2 * euler + 144 * math.pi ** 2 * signature - calabi) / (8 * volume)
    if radicand < 0:
        raise NegativeRadicandError(f"Einstein constant radicand is negative ({radicand:.6g})")
    lam = math.sqrt(radicand)
    return EinsteinConstants(lam, 4.0 * lam, volume)


def gradient_norm_oracle(target: ExtremalAffineTarget, constants: EinsteinConstants,
                         p: float, scheme: PolytopeQuadrature) -> float:
    """``∫ |∇_e S^p|² dV_e`` from the closed-form identity

    ``p² / (6 (2p - 1)) ∫ (S⁴ - κ S) S^(2p-5) dV``,

    which holds for the exact metric and needs no potential.
    """
    if p == 0.5:
        raise InvalidParameterError("the identity excludes p = 1/2")
    S = target(scheme.points)
    integrand = (S ** 4 - constants.kappa * S) * S ** (2 * p - 5)
    return p * p / (6 * (2 * p - 1)) * FOUR_PI_SQ * scheme.integrate_values(integrand)


# ---------------------------------------------------------------------------
# sample grid


def edge_samples(poly: MomentPolytope, spacing: float = GRID_SPACING,
                 nudge: float = BOUNDARY_NUDGE) -> np.ndarray:
    """Points along every edge (vertices included) at roughly ``spacing``,
    pulled inwards like the boundary points of :func:`sample_grid`."""
    verts = np.asarray(poly.vertices)
    c = verts.mean(axis=0)
    out = []
    for e in poly.edges:
        p, q = np.asarray(e.start), np.asarray(e.end)
        n = max(int(math.ceil(np.linalg.norm(q - p) / spacing)), 1)
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        out.append(p + s * (q - p))
    X = np.concatenate(out)
    return X + nudge * (c - X)


def sample_grid(poly: MomentPolytope, spacing: float = GRID_SPACING,
                nudge: float = BOUNDARY_NUDGE) -> np.ndarray:
    """Square grid anchored at the lower-left corner of the bounding box,
    restricted to the closed polygon.

    Points on the boundary are pulled towards the vertex average by the
    relative amount ``nudge`` so that curvature can be evaluated there; the
    values approximate boundary limits.
    """
    verts = np.asarray(poly.vertices)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    gx = np.arange(lo[0], hi[0] + 1e-12, spacing)
    gy = np.arange(lo[1], hi[1] + 1e-12, spacing)
    X = np.stack(np.meshgrid(gx, gy, indexing="ij"), axis=-1).reshape(-1, 2)
    X = X[np.all(poly.evaluate_facets(X) >= -1e-12, axis=1)]
    c = verts.mean(axis=0)
    on_bd = np.any(poly.evaluate_facets(X) <= nudge, axis=1)
    X[on_bd] += nudge * (c - X[on_bd])
    return X


# ---------------------------------------------------------------------------
# table rows


@dataclass(frozen=True)
class DiagnosticsRow:
    degree: int
    l2_error: float
    max_dev: float
    min_dev: float
    beta: float
    grad_s_norm: float
    grad_sinv_norm: float

    def to_dict(self) -> dict:
        return asdict(self)


def gradient_norms(u: SymplecticPotential, target: ExtremalAffineTarget,
                   scheme: PolytopeQuadrature) -> tuple[float, float]:
    """``(‖∇S‖², ‖∇S^-1‖²)`` in ``L²(g_e)`` computed with the approximate metric."""
    ev = PointEvaluator(u.polytope, u.basis, scheme.points)
    if not np.all(ev.feasible(u.coeffs)):
        raise InfeasibleIntegrandError("Hessian is indefinite at a quadrature node")
    G, _, _ = ev.inverse_jet(u.coeffs)
    g = target.gradient
    grad_sq = np.einsum("a,nab,b->n", g, G, g)
    S = target(scheme.points)
    return (FOUR_PI_SQ * scheme.integrate_values(grad_sq * S ** -2.0),
            FOUR_PI_SQ * scheme.integrate_values(grad_sq * S ** -6.0))


def diagnostics_row(u: SymplecticPotential, target: ExtremalAffineTarget,
                    constants: EinsteinConstants, scheme: PolytopeQuadrature,
                    grid: np.ndarray | None = None) -> DiagnosticsRow:
    """One row of the error table for the potential ``u``.

    ``l2_error`` and ``beta`` are volume-normalised L² norms over ``scheme``;
    ``max_dev``/``min_dev`` are extremes of ``S - S_target`` over ``grid``
    (default :func:`sample_grid`).
    """
    ev = PointEvaluator(u.polytope, u.basis, scheme.points)
    if not np.all(ev.feasible(u.coeffs)):
        raise InfeasibleIntegrandError("Hessian is indefinite at a quadrature node")
    G, dG, d2G = ev.inverse_jet(u.coeffs)
    pts = scheme.points
    diff = -np.einsum("nijij->n", d2G) - target(pts)
    norm = volume_normalisation(u.polytope)
    l2 = math.sqrt(norm * scheme.integrate_values(diff ** 2))
    defect, S, grad_sq, _ = conformal_defect_terms(target, constants.kappa, pts, G, dG)
    beta = math.sqrt(norm * scheme.integrate_values(defect ** 2))
    grad_s = FOUR_PI_SQ * scheme.integrate_values(grad_sq * S ** -2.0)
    grad_sinv = FOUR_PI_SQ * scheme.integrate_values(grad_sq * S ** -6.0)

    X = sample_grid(u.polytope) if grid is None else grid
    dev = _chunked(lambda Y: PointEvaluator(u.polytope, u.basis, Y).curvature(u.coeffs), X) - target(X)
    if not np.all(np.isfinite(dev)):
        raise InfeasibleIntegrandError("curvature not finite on the sample grid")
    return DiagnosticsRow(u.basis.degree, l2, float(dev.max()), float(dev.min()),
                          beta, grad_s, grad_sinv)


# ---------------------------------------------------------------------------
# Rayleigh quotients


@dataclass(frozen=True)
class EigenAnsatz:
    """Trial function ``c + lead + Σ a_i b_i`` minimising the Rayleigh quotient."""

    parity: str
    coefficients: np.ndarray
    mean_offset: float
    terms: tuple[tuple[tuple[int, int, int], ...], ...]

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = _ansatz_values(self.terms, x)
        return self.mean_offset + vals[:, 0] + vals[:, 1:] @ self.coefficients

    def to_dict(self) -> dict:
        return {"parity": self.parity,
                "coefficients": [float(a) for a in self.coefficients],
                "mean_offset": self.mean_offset}


def ansatz_terms(parity: str, degree: int = 3):
    """Polynomial terms of the trial family, leading term first.

    Each term is a tuple of ``(sign, i, j)`` meaning ``Σ sign x1^i x2^j``.
    ``plus``: ``x1+x2, x1x2, x1²+x2², x1x2(x1+x2), x1³+x2³, ...``;
    ``minus``: ``x1-x2, x1²-x2², x1x2(x1-x2), x1³-x2³, ...``.
    """
    if parity not in ("plus", "minus"):
        raise InvalidParameterError(f"parity must be 'plus' or 'minus', got {parity!r}")
    if degree < 1:
        raise InvalidParameterError("ansatz degree must be at least 1")
    terms = []
    for d in range(1, degree + 1):
        for low in range(d // 2, -1, -1):
            high = d - low
            if parity == "plus":
                terms.append(((1, low, high),) if low == high else ((1, low, high), (1, high, low)))
            elif low != high:
                terms.append(((1, high, low), (-1, low, high)))
    return tuple(terms)


def _ansatz_values(terms, x):
    return np.stack([sum(s * x[:, 0] ** i * x[:, 1] ** j for s, i, j in t) for t in terms], axis=1)


def _ansatz_gradients(terms, x):
    out = np.zeros((len(x), len(terms), 2))
    for m, t in enumerate(terms):
        for s, i, j in t:
            if i:
                out[:, m, 0] += s * i * x[:, 0] ** (i - 1) * x[:, 1] ** j
            if j:
                out[:, m, 1] += s * j * x[:, 0] ** i * x[:, 1] ** (j - 1)
    return out


def _rayleigh_forms(u, target, parity, scheme, degree, mean="einstein"):
    """Gram matrices ``(K, M)`` of numerator and denominator over the trial
    family, and the per-term means removed for even parity."""
    if mean not in ("einstein", "kahler"):
        raise InvalidParameterError(f"mean must be 'einstein' or 'kahler', got {mean!r}")
    terms = ansatz_terms(parity, degree)
    pts = scheme.points
    ev = PointEvaluator(u.polytope, u.basis, pts)
    if not np.all(ev.feasible(u.coeffs)):
        raise InfeasibleIntegrandError("Hessian is indefinite at a quadrature node")
    G, _, _ = ev.inverse_jet(u.coeffs)
    S = target(pts)
    w = scheme.weights
    psi = _ansatz_values(terms, pts)
    dpsi = _ansatz_gradients(terms, pts)
    means = np.zeros(len(terms))
    if parity == "plus":
        dens = w * S ** -4.0 if mean == "einstein" else w
        means = dens @ psi / dens.sum()
        psi = psi - means
    K = FOUR_PI_SQ * np.einsum("n,npa,nab,nqb->pq", w * S ** -2.0, dpsi, G, dpsi)
    M = FOUR_PI_SQ * np.einsum("n,np,nq->pq", w * S ** -4.0, psi, psi)
    return terms, 0.5 * (K + K.T), 0.5 * (M + M.T), means


def rayleigh_minimize(u: SymplecticPotential, target: ExtremalAffineTarget,
                      constants: EinsteinConstants, parity: str,
                      scheme: PolytopeQuadrature, degree: int = 3, mean: str = "einstein"):
    """Minimise ``‖∇f‖² / ‖f‖²`` (Einstein metric) over the trial family.

    Both forms are quadratic in the coefficients, so the minimum is the
    smallest eigenvalue of the pencil ``(K, M)``.  For even parity the family
    is projected onto functions with zero mean against ``S^-4 dx`` (the
    Einstein volume), or against ``dx`` with ``mean="kahler"``.
    Returns ``(EigenAnsatz, eigenvalue / Λ)``.
    """
    terms, K, M, means = _rayleigh_forms(u, target, parity, scheme, degree, mean)
    try:
        vals, vecs = scipy.linalg.eigh(K, M)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteGramError("denominator Gram matrix is not positive definite") from exc
    v = vecs[:, 0] / vecs[0, 0]
    ansatz = EigenAnsatz(parity, v[1:].copy(), float(-(v @ means)), terms)
    return ansatz, float(vals[0]) / constants.lambda_


def rayleigh_value(u: SymplecticPotential, target: ExtremalAffineTarget,
                   constants: EinsteinConstants, parity: str, coefficients,
                   scheme: PolytopeQuadrature) -> float:
    """Rayleigh quotient (in units of ``Λ``) of the trial function with the
    given non-leading coefficients; the family degree follows their count."""
    coefficients = np.asarray(coefficients, dtype=float)
    degree = 1
    while len(ansatz_terms(parity, degree)) - 1 < len(coefficients):
        degree += 1
    terms, K, M, _ = _rayleigh_forms(u, target, parity, scheme, degree)
    if len(terms) - 1 != len(coefficients):
        raise InvalidParameterError(f"{len(coefficients)} coefficients do not fit a {parity} family")
    v = np.concatenate([[1.0], coefficients])
    return float(v @ K @ v) / float(v @ M @ v) / constants.lambda_


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityReport:
    max_laplacian_s2: float
    max_laplacian_s2_grid: float
    kappa: float
    hhs_threshold: float
    cone_threshold: float
    hhs_unstable: bool
    cone_unstable: bool
    eigen_plus: float | None = None
    eigen_minus: float | None = None
    conformal_interval: tuple[float, float] = (4.0 / 3.0, 2.0)
    conformal_unstable_plus: bool | None = None
    conformal_unstable_minus: bool | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conformal_interval"] = list(self.conformal_interval)
        return d


def laplacian_s_squared(u: SymplecticPotential, target: ExtremalAffineTarget,
                        kappa: float, x) -> np.ndarray:
    """``Δ S² = κ/3 + 2|∇S|² - S³/3`` pointwise (Kähler metric, ``S`` affine)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    H = _chunked(lambda Y: PointEvaluator(u.polytope, u.basis, Y).hessian(u.coeffs), X)
    G = np.linalg.inv(H)
    g = target.gradient
    S = target(X)
    return kappa / 3.0 + 2.0 * np.einsum("a,nab,b->n", g, G, g) - S ** 3 / 3.0


def stability_report(u: SymplecticPotential, target: ExtremalAffineTarget,
                     constants: EinsteinConstants, scheme: PolytopeQuadrature,
                     grid: np.ndarray | None = None, eigen_plus: float | None = None,
                     eigen_minus: float | None = None) -> StabilityReport:
    """Linear-stability checks for the conformal Einstein metric.

    ``sup Δ S² < κ/2`` signals instability, ``< 5κ/16`` instability of the
    Ricci-flat cone; a Laplace eigenvalue in ``(4Λ/3, 2Λ)`` signals
    conformal instability.  The supremum is taken over the grid, the edges
    and the quadrature nodes; ``max_laplacian_s2_grid`` is the grid-only
    value.  Eigenvalues are in units of ``Λ``; when omitted they are computed
    with :func:`rayleigh_minimize`.
    """
    X = sample_grid(u.polytope) if grid is None else grid
    on_grid = laplacian_s_squared(u, target, constants.kappa, X)
    rest = laplacian_s_squared(u, target, constants.kappa,
                               np.concatenate([edge_samples(u.polytope), scheme.points]))
    m = float(max(on_grid.max(), rest.max()))
    kappa = constants.kappa
    if eigen_plus is None:
        eigen_plus = rayleigh_minimize(u, target, constants, "plus", scheme)[1]
    if eigen_minus is None:
        eigen_minus = rayleigh_minimize(u, target, constants, "minus", scheme)[1]
    lo, hi = 4.0 / 3.0, 2.0
    return StabilityReport(
        max_laplacian_s2=m, max_laplacian_s2_grid=float(on_grid.max()), kappa=kappa,
        hhs_threshold=kappa / 2, cone_threshold=5 * kappa / 16,
        hhs_unstable=m < kappa / 2, cone_unstable=m < 5 * kappa / 16,
        eigen_plus=eigen_plus, eigen_minus=eigen_minus, conformal_interval=(lo, hi),
        conformal_unstable_plus=lo < eigen_plus < hi,
        conformal_unstable_minus=lo < eigen_minus < hi,
    )
