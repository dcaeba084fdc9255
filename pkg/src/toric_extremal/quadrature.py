"""Gauss-Legendre rules on [-1, 1] and tensor-product rules over polygons."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleIntegrandError, InvalidParameterError
from .polytope import MomentPolytope, clw_parameter

#: Quadrature order used while minimising.
OPTIMIZE_ORDER = 10
#: Quadrature order used for reported diagnostics.
DIAGNOSE_ORDER = 20


@dataclass(frozen=True)
class QuadratureRule1D:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f, lo: float = -1.0, hi: float = 1.0) -> float:
        half = 0.5 * (hi - lo)
        x = lo + half * (self.nodes + 1.0)
        return half * float(np.sum(self.weights * f(x)))


def gauss_legendre(k: int) -> QuadratureRule1D:
    """k-point Gauss-Legendre rule, exact for polynomials of degree <= 2k-1.

    Nodes are found by Newton's method on P_k using the three-term
    recurrence, starting from the Chebyshev-like guesses
    ``cos(pi (i - 1/4) / (k + 1/2))``.
    """
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 64:
        raise InvalidParameterError(f"rule size must be an integer in [1, 64], got {k!r}")
    k = int(k)
    m = (k + 1) // 2
    nodes = np.empty(k)
    weights = np.empty(k)
    for i in range(m):
        z = math.cos(math.pi * (i + 0.75) / (k + 0.5))
        for _ in range(100):
            p1, p2 = 1.0, 0.0
            for j in range(1, k + 1):
                p1, p2 = ((2 * j - 1) * z * p1 - (j - 1) * p2) / j, p1
            dp = k * (z * p1 - p2) / (z * z - 1.0)
            z_old = z
            z = z_old - p1 / dp
            if abs(z - z_old) <= 1e-16:
                break
        # recompute derivative at the converged node
        p1, p2 = 1.0, 0.0
        for j in range(1, k + 1):
            p1, p2 = ((2 * j - 1) * z * p1 - (j - 1) * p2) / j, p1
        dp = k * (z * p1 - p2) / (z * z - 1.0)
        w = 2.0 / ((1.0 - z * z) * dp * dp)
        nodes[i], nodes[k - 1 - i] = -z, z
        weights[i] = weights[k - 1 - i] = w
    if k % 2 == 1:
        nodes[m - 1] = 0.0
    return QuadratureRule1D(nodes, weights)


@dataclass(frozen=True)
class PolytopeQuadrature:
    """Weighted interior points; ``sum(w * f(p))`` approximates ``∫_P f dx``."""

    points: np.ndarray
    weights: np.ndarray
    order: int = 0

    def __len__(self):
        return len(self.weights)

    def integrate_values(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise InfeasibleIntegrandError("integrand is not finite at every node")
        return float(self.weights @ values)


def integrate(scheme: PolytopeQuadrature, f) -> float:
    """``Σ w_i f(p_i)`` with ``f`` evaluated on the ``(N, 2)`` point array."""
    return scheme.integrate_values(f(scheme.points))


def _iterated(rule, outer_lo, outer_hi, inner_lo, inner_hi, swap=False):
    """Tensor rule for ``∫_{outer} ∫_{inner(s)} f``; bounds of the inner
    variable may be affine in the outer one."""
    s_half = 0.5 * (outer_hi - outer_lo)
    s = outer_lo + s_half * (rule.nodes + 1.0)
    pts, wts = [], []
    for si, wi in zip(s, rule.weights):
        lo, hi = inner_lo(si), inner_hi(si)
        t_half = 0.5 * (hi - lo)
        t = lo + t_half * (rule.nodes + 1.0)
        for tj, wj in zip(t, rule.weights):
            pts.append((tj, si) if swap else (si, tj))
            wts.append(s_half * wi * t_half * wj)
    return pts, wts


def clw_split_scheme(poly: MomentPolytope, k: int = OPTIMIZE_ORDER) -> PolytopeQuadrature:
    """Tensor Gauss rule on the CLW pentagon, split into two smooth pieces.

    The rectangle ``-1 <= x1 <= 0, -1 <= x2 <= a-1`` (outer x2, inner x1) and
    the trapezoid ``0 <= x1 <= a-1, -1 <= x2 <= a-1-x1`` (outer x1, inner x2).
    Yields ``2 k^2`` points.
    """
    a = clw_parameter(poly)
    if a is None:
        raise InvalidParameterError("clw_split_scheme needs a CLW pentagon")
    rule = gauss_legendre(k)
    c = a - 1.0
    p1, w1 = _iterated(rule, -1.0, c, lambda s: -1.0, lambda s: 0.0, swap=True)
    p2, w2 = _iterated(rule, 0.0, c, lambda s: -1.0, lambda s: c - s)
    return PolytopeQuadrature(np.array(p1 + p2), np.array(w1 + w2), order=k)


def triangulated_scheme(poly: MomentPolytope, k: int = OPTIMIZE_ORDER) -> PolytopeQuadrature:
    """Fan triangulation from the vertex average with a collapsed (Duffy)
    tensor rule on each triangle; exact to polynomial degree ``2k - 2``."""
    rule = gauss_legendre(k)
    s = 0.5 * (rule.nodes + 1.0)
    w = 0.5 * rule.weights
    verts = np.asarray(poly.vertices)
    c = verts.mean(axis=0)
    pts, wts = [], []
    for i in range(len(verts)):
        p, q = verts[i], verts[(i + 1) % len(verts)]
        u, v = p - c, q - p
        jac = abs(u[0] * v[1] - u[1] * v[0])
        for si, wi in zip(s, w):
            for tj, wj in zip(s, w):
                pts.append(c + si * (p - c) + si * tj * (q - p))
                wts.append(jac * si * wi * wj)
    return PolytopeQuadrature(np.array(pts), np.array(wts), order=k)


def default_scheme(poly: MomentPolytope, k: int = OPTIMIZE_ORDER) -> PolytopeQuadrature:
    """The split rule on CLW pentagons, the fan rule elsewhere."""
    if clw_parameter(poly) is not None:
        return clw_split_scheme(poly, k)
    return triangulated_scheme(poly, k)
