"""Symplectic potentials ``u = u_can + F`` and Abreu's scalar curvature.

Derivatives are carried as a :class:`HessianJet`: the Hessian ``H = (u_ij)``
together with its first and second derivatives, vectorised over points.

Array conventions (``N`` points)::

    H[n, i, j]         = u_ij
    dH[n, k, i, j]     = d_k u_ij
    d2H[n, k, l, i, j] = d_k d_l u_ij

Monomial jets used for coefficient derivatives carry an extra basis axis
``m`` right after ``n``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    BoundaryPointError,
    IndefiniteHessianError,
    InvalidParameterError,
    MalformedFileError,
)
from .polytope import MomentPolytope, build_clw_pentagon

#: Points with some ``l_r(x) <= BOUNDARY_EPS`` are rejected.
BOUNDARY_EPS = 1e-13


def symmetric_term_count(degree: int) -> int:
    return (degree * degree + 4 * degree - 4) // 4


@dataclass(frozen=True)
class MonomialBasis:
    """Polynomial basis for ``F`` of total degree 2..degree.

    ``terms`` holds exponent pairs ``(i, j)`` for ``x1^i x2^j``.  With
    ``symmetric=True`` each entry stands for ``x1^i x2^j + x1^j x2^i``
    (once when ``i == j``) and the order within a degree is by decreasing
    smaller exponent: ``x1x2, x1^2+x2^2, x1x2(x1+x2), x1^3+x2^3, x1^2x2^2, ...``
    """

    terms: tuple[tuple[int, int], ...]
    symmetric: bool = True

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            raise InvalidParameterError("basis terms must be distinct")
        for i, j in self.terms:
            if i < 0 or j < 0 or i + j < 2:
                raise InvalidParameterError(f"invalid basis exponent {(i, j)}")
            if self.symmetric and i > j:
                raise InvalidParameterError("symmetric terms are listed with i <= j")

    @classmethod
    def of_degree(cls, degree: int, symmetric: bool = True) -> "MonomialBasis":
        if degree < 2:
            raise InvalidParameterError(f"degree must be at least 2, got {degree}")
        terms = []
        for d in range(2, degree + 1):
            if symmetric:
                terms += [(i, d - i) for i in range(d // 2, -1, -1)]
            else:
                terms += [(d - j, j) for j in range(d + 1)]
        return cls(tuple(terms), symmetric)

    @property
    def degree(self) -> int:
        return max(i + j for i, j in self.terms)

    def __len__(self):
        return len(self.terms)

    def monomials(self, term: int) -> list[tuple[int, int]]:
        i, j = self.terms[term]
        if self.symmetric and i != j:
            return [(i, j), (j, i)]
        return [(i, j)]

    def label(self, term: int) -> str:
        parts = [f"x1^{i}*x2^{j}" for i, j in self.monomials(term)]
        return " + ".join(parts)

    def evaluate(self, x) -> np.ndarray:
        """Basis functions at points; shape ``(N, M)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), len(self)))
        for m in range(len(self)):
            for i, j in self.monomials(m):
                out[:, m] += x[:, 0] ** i * x[:, 1] ** j
        return out

    def jets(self, x):
        """Per-term Hessian jets ``(B, dB, d2B)`` of shapes
        ``(N, M, 2, 2)``, ``(N, M, 2, 2, 2)`` and ``(N, M, 2, 2, 2, 2)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, m = len(x), len(self)
        B = np.zeros((n, m, 2, 2))
        dB = np.zeros((n, m, 2, 2, 2))
        d2B = np.zeros((n, m, 2, 2, 2, 2))
        deriv = _DerivativeTable(x, self.degree)
        for t in range(m):
            for p, q in self.monomials(t):
                for i in range(2):
                    for j in range(2):
                        e = [0, 0]
                        e[i] += 1
                        e[j] += 1
                        B[:, t, i, j] += deriv(p, q, *e)
                        for k in range(2):
                            ek = list(e)
                            ek[k] += 1
                            dB[:, t, k, i, j] += deriv(p, q, *ek)
                            for l in range(2):
                                ekl = list(ek)
                                ekl[l] += 1
                                d2B[:, t, k, l, i, j] += deriv(p, q, *ekl)
        return B, dB, d2B


class _DerivativeTable:
    """``d^(a+b)/dx1^a dx2^b (x1^p x2^q)`` at fixed points, with cached powers."""

    def __init__(self, x, degree):
        self.pow1 = np.stack([x[:, 0] ** e for e in range(degree + 1)])
        self.pow2 = np.stack([x[:, 1] ** e for e in range(degree + 1)])

    def __call__(self, p, q, a, b):
        if a > p or b > q:
            return 0.0
        c = math.perm(p, a) * math.perm(q, b)
        return c * self.pow1[p - a] * self.pow2[q - b]


@dataclass(frozen=True)
class HessianJet:
    H: np.ndarray
    dH: np.ndarray
    d2H: np.ndarray

    def __add__(self, other: "HessianJet") -> "HessianJet":
        return HessianJet(self.H + other.H, self.dH + other.dH, self.d2H + other.d2H)

    def at(self, n: int) -> "HessianJet":
        return HessianJet(self.H[n], self.dH[n], self.d2H[n])


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 2)


def canonical_jet(poly: MomentPolytope, x) -> HessianJet:
    """Jet of ``u_can = 1/2 Σ l_r log l_r`` at interior points."""
    x = _points(x)
    nu = poly.normals
    lv = poly.evaluate_facets(x)
    if np.any(lv <= BOUNDARY_EPS):
        raise BoundaryPointError("point on or outside the polytope boundary")
    outer = nu[:, :, None] * nu[:, None, :]  # (R, 2, 2)
    H = 0.5 * np.einsum("nr,rij->nij", 1.0 / lv, outer)
    dH = -0.5 * np.einsum("nr,rk,rij->nkij", lv ** -2, nu, outer)
    d2H = np.einsum("nr,rk,rl,rij->nklij", lv ** -3, nu, nu, outer)
    return HessianJet(H, dH, d2H)


def polynomial_jet(basis: MonomialBasis, coeffs, x) -> HessianJet:
    """Exact jet of ``F = Σ c_m b_m``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(basis),):
        raise InvalidParameterError("coefficient vector does not match basis")
    B, dB, d2B = basis.jets(_points(x))
    return HessianJet(np.einsum("m,nmij->nij", coeffs, B),
                      np.einsum("m,nmkij->nkij", coeffs, dB),
                      np.einsum("m,nmklij->nklij", coeffs, d2B))


# ---------------------------------------------------------------------------
# closed-form curvature from a jet


def inverse_jet(jet: HessianJet):
    """``(G, dG, d2G)`` for ``G = H^{-1}`` using the 2x2 adjugate.

    ``dG_k = -G dH_k G`` and
    ``d2G_kl = G dH_k G dH_l G + G dH_l G dH_k G - G d2H_kl G``.
    """
    H = jet.H
    det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
    G = np.empty_like(H)
    G[:, 0, 0] = H[:, 1, 1]
    G[:, 1, 1] = H[:, 0, 0]
    G[:, 0, 1] = -H[:, 0, 1]
    G[:, 1, 0] = -H[:, 1, 0]
    G /= det[:, None, None]
    GdH = np.einsum("nab,nkbc->nkac", G, jet.dH)
    dG = -np.einsum("nkab,nbc->nkac", GdH, G)
    GdHG = -dG
    two = np.einsum("nkab,nlbc->nklac", GdH, GdHG)
    d2G = two + two.transpose(0, 2, 1, 3, 4)
    d2G -= np.einsum("nab,nklbc,ncd->nklad", G, jet.d2H, G)
    return G, dG, d2G


def facet_inverse_jet(poly: MomentPolytope, poly_jet: HessianJet, x):
    """``(G, dG, d2G)`` for ``u = u_can + F`` keeping the canonical part in
    rank-one facet form.

    Near a facet the canonical Hessian terms grow like ``1/l``; contracting
    them against ``G nu_r`` (which is ``O(l)``) before multiplying avoids the
    cancellation that the generic :func:`inverse_jet` suffers there.
    """
    x = _points(x)
    nu = poly.normals
    lv = poly.evaluate_facets(x)
    if np.any(lv <= BOUNDARY_EPS):
        raise BoundaryPointError("point on or outside the polytope boundary")
    w = 0.5 / lv
    Hp, dHp, d2Hp = poly_jet.H, poly_jet.dH, poly_jet.d2H
    H = np.einsum("nr,ri,rj->nij", w, nu, nu) + Hp

    # det(Σ w_r nu_r nu_r^T + Hp) expanded so that no large terms cancel,
    # and the same with facet r left out (matrix determinant lemma below)
    cross2 = (nu[:, None, 0] * nu[None, :, 1] - nu[:, None, 1] * nu[None, :, 0]) ** 2
    perp = np.stack([-nu[:, 1], nu[:, 0]], axis=1)
    quad = np.einsum("ri,nij,rj->nr", perp, Hp, perp)
    detp = Hp[:, 0, 0] * Hp[:, 1, 1] - Hp[:, 0, 1] * Hp[:, 1, 0]
    det = (0.5 * np.einsum("nr,ns,rs->n", w, w, cross2)
           + np.einsum("nr,nr->n", w, quad) + detp)
    # summed directly, not as det minus the facet-r terms, which would cancel
    wo = w[:, None, :] * (1.0 - np.eye(len(nu)))[None]
    det_wo = (0.5 * np.einsum("nrs,nrt,st->nr", wo, wo, cross2)
              + np.einsum("nrs,ns->nr", wo, quad) + detp[:, None])
    G = np.empty_like(H)
    G[:, 0, 0] = H[:, 1, 1]
    G[:, 1, 1] = H[:, 0, 0]
    G[:, 0, 1] = -H[:, 0, 1]
    G[:, 1, 0] = -H[:, 1, 0]
    G /= det[:, None, None]

    # G nu_r = adj(H) nu_r / det with adj(H) nu = -J H perp; facet r drops out
    # of H perp_r exactly, so the small component along nu_r is not lost
    dot = nu @ perp.T  # nu_s . perp_r
    Hperp = (np.einsum("nrs,si,sr->nri", wo, nu, dot)
             + np.einsum("nij,rj->nri", Hp, perp))
    g = np.stack([Hperp[..., 1], -Hperp[..., 0]], axis=-1) / det[:, None, None]
    s1 = -0.5 * lv ** -2
    GdHp = np.einsum("nab,nkbc->nkac", G, dHp)
    P = np.einsum("nkab,nbc->nkac", GdHp, G)  # G dHp_k G
    M = np.einsum("nr,rk,nra,nrb->nkab", s1, nu, g, g) + P  # G dH_k G
    # G dH_k G dH_l G split by facet pairs; the r = s pairs are combined with
    # the facet part of G d2H G: 2 s1^2 (nu^T G nu) - l^-3 = -l^-3 det_wo / det
    # nu_s^T G nu_r is symmetric; read it off the facet nearer the point,
    # whose g is small, rather than as the small component of an O(1) vector
    B = np.einsum("nra,sa->nrs", g, nu)
    B = np.where(lv[:, :, None] <= lv[:, None, :], B, B.transpose(0, 2, 1))
    C = s1[:, :, None] * s1[:, None, :] * B
    idx = np.arange(len(nu))
    C[:, idx, idx] = 0.0
    two = (np.einsum("nrs,rk,sl,nra,nsb->nklab", C, nu, nu, g, g)
           + np.einsum("ns,sl,nkab,nsb,nsc->nklac", s1, nu, GdHp, g, g)
           + np.einsum("nkab,nlbc,ncd->nklad", M, dHp, G))
    diag = -lv ** -3 * det_wo / det[:, None]
    d2G = (two + two.transpose(0, 2, 1, 3, 4)
           + np.einsum("nr,rk,rl,nra,nrb->nklab", diag, nu, nu, g, g)
           - np.einsum("nab,nklbc,ncd->nklad", G, d2Hp, G))
    return G, -M, d2G


def feasible_mask(H) -> np.ndarray:
    det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
    return (det > 0) & (H[:, 0, 0] > 0)


def curvature_from_jet(jet: HessianJet) -> np.ndarray:
    """Abreu's formula ``S = -Σ_ij d_i d_j (H^{-1})_ij``."""
    _, _, d2G = inverse_jet(jet)
    return -np.einsum("nijij->n", d2G)


def curvature_sensitivity(G, dG, d2G):
    """Coefficient tensors ``(P0, P1, P2)`` such that the first variation of
    ``S`` along a Hessian jet ``(B, dB, d2B)`` equals
    ``<P0, B> + <P1, dB> + <P2, d2B>``.

    Obtained by expanding ``δS = Σ_ij d_i d_j (G B G)_ij`` with the product
    rule over the three factors.
    """
    v = np.einsum("niia->na", dG)
    P2 = np.einsum("nka,nbl->nklab", G, G)
    P1 = (np.einsum("na,nbk->nkab", v, G)
          + np.einsum("njka,nbj->nkab", dG, G)
          + np.einsum("nka,nb->nkab", G, v)
          + np.einsum("nia,nibk->nkab", G, dG))
    P0 = (np.einsum("nijia,nbj->nab", d2G, G)
          + np.einsum("nia,nijbj->nab", G, d2G)
          + np.einsum("na,nb->nab", v, v)
          + np.einsum("njia,nibj->nab", dG, dG))
    return P0, P1, P2


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymplecticPotential:
    """``u = u_can + Σ c_m b_m`` on a moment polygon."""

    polytope: MomentPolytope
    basis: MonomialBasis
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        c = np.zeros(len(self.basis)) if self.coeffs is None else np.array(self.coeffs, dtype=float)
        if c.shape != (len(self.basis),):
            raise InvalidParameterError(
                f"expected {len(self.basis)} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def canonical(cls, polytope, degree=2, symmetric=True):
        return cls(polytope, MonomialBasis.of_degree(degree, symmetric))

    def with_coeffs(self, coeffs) -> "SymplecticPotential":
        return SymplecticPotential(self.polytope, self.basis, coeffs)

    def padded(self, degree: int) -> "SymplecticPotential":
        """Same potential in a larger basis, new coefficients set to zero."""
        basis = MonomialBasis.of_degree(degree, self.basis.symmetric)
        index = {t: i for i, t in enumerate(basis.terms)}
        c = np.zeros(len(basis))
        for t, v in zip(self.basis.terms, self.coeffs):
            if t not in index:
                raise InvalidParameterError("target degree is smaller than current basis")
            c[index[t]] = v
        return SymplecticPotential(self.polytope, basis, c)

    def jet(self, x) -> HessianJet:
        return canonical_jet(self.polytope, x) + polynomial_jet(self.basis, self.coeffs, x)

    def hessian(self, x) -> np.ndarray:
        return self.jet(x).H

    def inverse_hessian(self, x) -> np.ndarray:
        return np.linalg.inv(self.hessian(x))


def scalar_curvature(u: SymplecticPotential, x):
    """Scalar curvature at one point (returns float) or an ``(N, 2)`` array."""
    single = np.ndim(x) == 1
    ev = PointEvaluator(u.polytope, u.basis, x)
    s = ev.curvature(u.coeffs, strict=True)
    return float(s[0]) if single else s


def scalar_curvature_coeff_jacobian(u: SymplecticPotential, x) -> np.ndarray:
    """``dS/dc_m`` at a point (shape ``(M,)``) or points (shape ``(N, M)``)."""
    single = np.ndim(x) == 1
    ev = PointEvaluator(u.polytope, u.basis, x)
    _, J = ev.curvature_and_jacobian(u.coeffs, strict=True)
    return J[0] if single else J


class PointEvaluator:
    """Curvature of ``u_can + Σ c_m b_m`` at a fixed point set.

    Basis jets are computed once, so repeated evaluation for new coefficient
    vectors (as in an optimiser) costs only the per-point 2x2 algebra.
    """

    def __init__(self, polytope: MomentPolytope, basis: MonomialBasis, points):
        self.polytope = polytope
        self.basis = basis
        self.points = _points(points)
        lv = polytope.evaluate_facets(self.points)
        if np.any(lv <= BOUNDARY_EPS):
            raise BoundaryPointError("point on or outside the polytope boundary")
        self.B, self.dB, self.d2B = basis.jets(self.points)
        n, m = len(self.points), len(basis)
        self._flat = np.concatenate([self.B.reshape(n, m, -1), self.dB.reshape(n, m, -1),
                                     self.d2B.reshape(n, m, -1)], axis=2)

    def poly_jet(self, coeffs) -> HessianJet:
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (len(self.basis),):
            raise InvalidParameterError("coefficient vector does not match basis")
        return HessianJet(np.einsum("m,nmij->nij", c, self.B),
                          np.einsum("m,nmkij->nkij", c, self.dB),
                          np.einsum("m,nmklij->nklij", c, self.d2B))

    def hessian(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        nu = self.polytope.normals
        w = 0.5 / self.polytope.evaluate_facets(self.points)
        return np.einsum("nr,ri,rj->nij", w, nu, nu) + np.einsum("m,nmij->nij", c, self.B)

    def feasible(self, coeffs) -> np.ndarray:
        """Per-point positive definiteness of the Hessian."""
        return feasible_mask(self.hessian(coeffs))

    def inverse_jet(self, coeffs, strict=False):
        jet = self.poly_jet(coeffs)
        if strict:
            H = self.hessian(coeffs)
            if not np.all(feasible_mask(H)) or np.any(H[:, 0, 0] + H[:, 1, 1] <= 0):
                raise IndefiniteHessianError("Hessian is not positive definite")
        return facet_inverse_jet(self.polytope, jet, self.points)

    def curvature(self, coeffs, strict=False) -> np.ndarray:
        _, _, d2G = self.inverse_jet(coeffs, strict)
        return -np.einsum("nijij->n", d2G)

    def jacobian_from_inverse(self, G, dG, d2G) -> np.ndarray:
        n = len(self.points)
        P = np.concatenate([p.reshape(n, -1) for p in curvature_sensitivity(G, dG, d2G)], axis=1)
        return np.einsum("nq,nmq->nm", P, self._flat)

    def curvature_and_jacobian(self, coeffs, strict=False):
        G, dG, d2G = self.inverse_jet(coeffs, strict)
        return -np.einsum("nijij->n", d2G), self.jacobian_from_inverse(G, dG, d2G)


def is_positive_definite_on(u: SymplecticPotential, points) -> bool:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return True
    try:
        H = u.hessian(pts)
    except BoundaryPointError:
        return False
    return bool(np.all(feasible_mask(H)))


# ---------------------------------------------------------------------------
# coefficient files


def save_coefficients(u: SymplecticPotential, path, a: float | None = None,
                      metadata: dict | None = None) -> None:
    data = {
        "a": a,
        "degree": u.basis.degree,
        "symmetric": u.basis.symmetric,
        "coeffs": [float(c) for c in u.coeffs],
    }
    if metadata:
        data["metadata"] = metadata
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_coefficients(path, polytope: MomentPolytope | None = None) -> tuple[SymplecticPotential, dict]:
    """Read a coefficient file; the CLW pentagon is built from ``a`` unless a
    polytope is given.  Shorter coefficient lists are padded with zeros."""
    try:
        data = json.loads(Path(path).read_text())
        degree = int(data["degree"])
        symmetric = bool(data.get("symmetric", True))
        coeffs = [float(c) for c in data["coeffs"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MalformedFileError(f"cannot read coefficient file {path}: {exc}") from exc
    basis = MonomialBasis.of_degree(degree, symmetric)
    if len(coeffs) > len(basis):
        raise MalformedFileError(
            f"{len(coeffs)} coefficients exceed the {len(basis)} terms of degree {degree}")
    coeffs += [0.0] * (len(basis) - len(coeffs))
    if polytope is None:
        if data.get("a") is None:
            raise MalformedFileError("coefficient file has no class parameter 'a'")
        polytope = build_clw_pentagon(float(data["a"]))
    return SymplecticPotential(polytope, basis, coeffs), data
