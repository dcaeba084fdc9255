"""Moment polygons, their boundary measure, and the extremal affine target.

A polygon is stored as a list of affine functionals ``l(x) = normal . x + offset``
with ``P = {x : l(x) >= 0 for all l}``.  Vertices are recovered by intersecting
facet lines and ordered counterclockwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .exceptions import InvalidParameterError, MalformedFileError, SingularSystemError

#: Absolute tolerance for vertex/facet incidence tests.
INCIDENCE_TOL = 1e-12

#: Class parameter of the Chen-LeBrun-Weber extremal metric (10 d.p.).
CLW_A = 1.9577128052


@dataclass(frozen=True)
class AffineFunctional:
    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        n = tuple(float(v) for v in self.normal)
        if len(n) != 2:
            raise InvalidParameterError("normal must be a 2-vector")
        if n == (0.0, 0.0):
            raise InvalidParameterError("normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.normal) + self.offset

    @property
    def is_primitive(self) -> bool:
        n1, n2 = self.normal
        if not (float(n1).is_integer() and float(n2).is_integer()):
            return False
        return math.gcd(int(n1), int(n2)) == 1


@dataclass(frozen=True)
class Edge:
    facet: int
    start: tuple[float, float]
    end: tuple[float, float]
    density: float

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)


@dataclass(frozen=True)
class MomentPolytope:
    """Convex polygon ``{x : l_r(x) >= 0}`` with its boundary measure.

    Build instances with :func:`from_facets` (or the named constructors); the
    dataclass fields are derived data and are not re-validated.
    """

    facets: tuple[AffineFunctional, ...]
    vertices: tuple[tuple[float, float], ...]
    edges: tuple[Edge, ...]
    name: str = field(default="polygon", compare=False)

    @property
    def normals(self) -> np.ndarray:
        return np.array([f.normal for f in self.facets])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([f.offset for f in self.facets])

    def evaluate_facets(self, x) -> np.ndarray:
        """Values ``l_r(x)``; shape ``(..., n_facets)``."""
        x = np.asarray(x, dtype=float)
        return x @ self.normals.T + self.offsets

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        return np.all(self.evaluate_facets(x) > margin, axis=-1)

    @property
    def area(self) -> float:
        return polygon_moment(self, 0, 0)

    @property
    def perimeter(self) -> float:
        return sum(e.length for e in self.edges)

    @property
    def centroid(self) -> np.ndarray:
        a = self.area
        return np.array([polygon_moment(self, 1, 0), polygon_moment(self, 0, 1)]) / a

    def translate(self, t) -> "MomentPolytope":
        t = np.asarray(t, dtype=float)
        facets = [AffineFunctional(f.normal, f.offset - float(np.dot(f.normal, t)))
                  for f in self.facets]
        return from_facets(facets, name=self.name)

    def to_dict(self) -> dict:
        return {"facets": [{"normal": list(f.normal), "offset": f.offset}
                           for f in self.facets]}


def from_facets(facets, name: str = "polygon") -> MomentPolytope:
    """Build a polygon from its facet functionals.

    Every facet must support an edge of positive length; redundant
    half-planes are rejected rather than silently dropped.
    """
    facets = tuple(f if isinstance(f, AffineFunctional) else AffineFunctional(*f)
                   for f in facets)
    if len(facets) < 3:
        raise InvalidParameterError("a polygon needs at least three facets")
    normals = np.array([f.normal for f in facets])
    offsets = np.array([f.offset for f in facets])

    candidates = []
    for i, j in combinations(range(len(facets)), 2):
        m = np.array([normals[i], normals[j]])
        if abs(np.linalg.det(m)) < 1e-14:
            continue
        p = np.linalg.solve(m, -np.array([offsets[i], offsets[j]]))
        vals = normals @ p + offsets
        if np.all(vals >= -INCIDENCE_TOL):
            candidates.append(p)
    if len(candidates) < 3:
        raise InvalidParameterError("facets do not bound a polygon with nonempty interior")

    # merge duplicates (three lines through one point)
    verts: list[np.ndarray] = []
    for p in candidates:
        if not any(np.max(np.abs(p - q)) <= 1e-10 for q in verts):
            verts.append(p)
    c = np.mean(verts, axis=0)
    verts.sort(key=lambda p: math.atan2(p[1] - c[1], p[0] - c[0]))

    edges = []
    used = set()
    for k, p in enumerate(verts):
        q = verts[(k + 1) % len(verts)]
        on_both = [r for r in range(len(facets))
                   if abs(normals[r] @ p + offsets[r]) <= 1e-10
                   and abs(normals[r] @ q + offsets[r]) <= 1e-10]
        if len(on_both) != 1:
            raise InvalidParameterError("degenerate polygon: edge not on a unique facet")
        r = on_both[0]
        used.add(r)
        edges.append(Edge(r, tuple(map(float, p)), tuple(map(float, q)),
                          1.0 / float(np.linalg.norm(normals[r]))))
    if len(used) != len(facets):
        raise InvalidParameterError("redundant facet: every half-plane must support an edge")
    if not np.all(normals @ c + offsets > 0):
        raise InvalidParameterError("polygon interior is empty")
    return MomentPolytope(facets, tuple(tuple(map(float, v)) for v in verts),
                          tuple(edges), name=name)


def build_clw_pentagon(a: float = CLW_A) -> MomentPolytope:
    """Pentagon ``[-1, a-1]^2 ∩ {x1 + x2 <= a-1}`` of the two-point blow-up."""
    a = float(a)
    if not a > 1:
        raise InvalidParameterError(f"class parameter must exceed 1, got {a}")
    facets = [
        AffineFunctional((1, 0), 1.0),
        AffineFunctional((0, 1), 1.0),
        AffineFunctional((-1, 0), a - 1),
        AffineFunctional((0, -1), a - 1),
        AffineFunctional((-1, -1), a - 1),
    ]
    return from_facets(facets, name=f"clw(a={a!r})")


def build_square(half_width: float) -> MomentPolytope:
    h = float(half_width)
    if not h > 0:
        raise InvalidParameterError(f"half_width must be positive, got {h}")
    facets = [
        AffineFunctional((1, 0), h),
        AffineFunctional((0, 1), h),
        AffineFunctional((-1, 0), h),
        AffineFunctional((0, -1), h),
    ]
    return from_facets(facets, name=f"square(h={h!r})")


def clw_parameter(poly: MomentPolytope) -> float | None:
    """Return ``a`` if ``poly`` is a CLW pentagon (facets in any order), else None."""
    if len(poly.facets) != 5:
        return None
    by_normal = {f.normal: f.offset for f in poly.facets}
    expected = {(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (-1.0, -1.0)}
    if set(by_normal) != expected:
        return None
    if by_normal[(1.0, 0.0)] != 1.0 or by_normal[(0.0, 1.0)] != 1.0:
        return None
    c = by_normal[(-1.0, 0.0)]
    if by_normal[(0.0, -1.0)] != c or by_normal[(-1.0, -1.0)] != c:
        return None
    return c + 1.0


def _edge_rule(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def polygon_moment(poly: MomentPolytope, i: int, j: int) -> float:
    """Exact ``∫_P x1^i x2^j dx`` by Green's theorem.

    Uses ``∮ x1^(i+1) x2^j / (i+1) dx2`` over the counterclockwise boundary;
    each edge integrand is a polynomial in the edge parameter, integrated by a
    Gauss rule of sufficient degree.
    """
    if i < 0 or j < 0:
        raise InvalidParameterError("moment exponents must be nonnegative")
    t, w = _edge_rule((i + j + 2) // 2 + 1)
    total = 0.0
    for e in poly.edges:
        p = np.asarray(e.start)
        q = np.asarray(e.end)
        pts = p + t[:, None] * (q - p)
        dy = q[1] - p[1]
        total += dy * float(np.sum(w * pts[:, 0] ** (i + 1) * pts[:, 1] ** j)) / (i + 1)
    return total


def boundary_moment(poly: MomentPolytope, f) -> float:
    """``∫_∂P 2 f dσ`` for an affine ``f``.

    ``f`` may be an :class:`AffineFunctional`, a callable, or a triple
    ``(c1, c2, c0)`` meaning ``c1 x1 + c2 x2 + c0``.  Affine integrands are
    integrated exactly by the edge midpoint rule.
    """
    if isinstance(f, (tuple, list, np.ndarray)):
        c1, c2, c0 = map(float, f)

        def f(x, c1=c1, c2=c2, c0=c0):
            return c1 * x[0] + c2 * x[1] + c0
    total = 0.0
    for e in poly.edges:
        mid = 0.5 * (np.asarray(e.start) + np.asarray(e.end))
        total += 2.0 * e.density * e.length * float(f(mid))
    return total


@dataclass(frozen=True)
class ExtremalAffineTarget:
    """Affine scalar curvature ``S(x) = a . x + b``."""

    a_coeffs: tuple[float, float]
    b: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.a_coeffs) + self.b

    @property
    def gradient(self) -> np.ndarray:
        return np.asarray(self.a_coeffs, dtype=float)

    def futaki_residuals(self, poly: MomentPolytope) -> np.ndarray:
        """``∫_∂P 2f dσ - ∫_P S f dx`` for ``f`` in ``(1, x1, x2)``."""
        m = _moment_matrix(poly)
        s = np.array([self.a_coeffs[0], self.a_coeffs[1], self.b])
        rhs = np.array([boundary_moment(poly, (1, 0, 0)),
                        boundary_moment(poly, (0, 1, 0)),
                        boundary_moment(poly, (0, 0, 1))])
        return rhs - m @ s


def _moment_matrix(poly):
    # basis ordering (x1, x2, 1)
    exps = [(1, 0), (0, 1), (0, 0)]
    return np.array([[polygon_moment(poly, p[0] + q[0], p[1] + q[1]) for q in exps]
                     for p in exps])


def solve_extremal_affine(poly: MomentPolytope) -> ExtremalAffineTarget:
    """Affine ``S`` with ``∫_∂P 2f dσ = ∫_P S f dx`` for every affine ``f``."""
    m = _moment_matrix(poly)
    if np.linalg.cond(m) > 1e12:
        raise SingularSystemError("moment matrix is numerically singular")
    rhs = np.array([boundary_moment(poly, (1, 0, 0)),
                    boundary_moment(poly, (0, 1, 0)),
                    boundary_moment(poly, (0, 0, 1))])
    a1, a2, b = np.linalg.solve(m, rhs)
    return ExtremalAffineTarget((float(a1), float(a2)), float(b))


def clw_closed_form(a: float) -> tuple[float, float]:
    """Closed-form ``(A, B)`` with ``S = A (x1 + x2) + B`` on the CLW pentagon."""
    den = a**6 + 6 * a**5 + 9 * a**4 + 4 * a**3 - 3 * a**2 - 6 * a + 1
    A = 48 * (1 - a**3) / den
    B = 12 * (a**5 + 7 * a**4 - 2 * a**3 + 2 * a**2 - 5 * a + 5) / den
    return A, B


def load_polytope(path) -> MomentPolytope:
    try:
        data = json.loads(Path(path).read_text())
        facets = [AffineFunctional(tuple(f["normal"]), f["offset"]) for f in data["facets"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MalformedFileError(f"cannot read polytope file {path}: {exc}") from exc
    return from_facets(facets, name=Path(path).stem)


def save_polytope(poly: MomentPolytope, path) -> None:
    Path(path).write_text(json.dumps(poly.to_dict(), indent=2) + "\n")
