import json
from fractions import Fraction

import numpy as np
import pytest

from toric_extremal.exceptions import InvalidParameterError, MalformedFileError
from toric_extremal.polytope import (
    CLW_A,
    AffineFunctional,
    boundary_moment,
    build_clw_pentagon,
    build_square,
    clw_closed_form,
    clw_parameter,
    from_facets,
    load_polytope,
    polygon_moment,
    save_polytope,
    solve_extremal_affine,
)


def test_pentagon_vertices_and_area(pentagon):
    c = CLW_A - 1
    expected = {(-1.0, -1.0), (c, -1.0), (c, 0.0), (0.0, c), (-1.0, c)}
    got = {tuple(round(v, 12) for v in p) for p in pentagon.vertices}
    assert got == {tuple(round(v, 12) for v in p) for p in expected}
    assert pentagon.area == pytest.approx((CLW_A**2 + 2 * CLW_A - 1) / 2, rel=1e-14)


def test_edges_counterclockwise_and_unit_density(pentagon):
    v = np.asarray(pentagon.vertices)
    signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    assert signed > 0
    dens = {e.facet: e.density for e in pentagon.edges}
    assert dens[4] == pytest.approx(1 / np.sqrt(2))
    assert all(dens[r] == 1.0 for r in range(4))


def test_all_normals_primitive(pentagon):
    assert all(f.is_primitive for f in pentagon.facets)
    assert not AffineFunctional((2, 0), 1).is_primitive


def test_contains(pentagon):
    pts = np.array([[0, 0], [0.5, 0.5], [-1.5, 0], [0.9, -0.5]])
    assert pentagon.contains(pts).tolist() == [True, False, False, True]


def test_redundant_facet_rejected():
    facets = [((1, 0), 1), ((0, 1), 1), ((-1, 0), 1), ((0, -1), 1), ((-1, -1), 5)]
    with pytest.raises(InvalidParameterError):
        from_facets(facets)


def test_empty_interior_rejected():
    with pytest.raises(InvalidParameterError):
        from_facets([((1, 0), -1), ((-1, 0), -1), ((0, 1), 1)])


@pytest.mark.parametrize("a", [1.0, 0.5, -2.0])
def test_class_parameter_must_exceed_one(a):
    with pytest.raises(InvalidParameterError):
        build_clw_pentagon(a)


def test_clw_parameter_roundtrip(pentagon, square):
    assert clw_parameter(pentagon) == pytest.approx(CLW_A, abs=1e-15)
    assert clw_parameter(square) is None


def test_polygon_moments_match_direct_formula(square):
    # ∫_{[-1,1]^2} x^i y^j = (1-(-1)^(i+1))/(i+1) * (same in j)
    def m1(k):
        return (1 - (-1) ** (k + 1)) / (k + 1)

    for i in range(5):
        for j in range(5):
            assert polygon_moment(square, i, j) == pytest.approx(m1(i) * m1(j), abs=1e-13)


def test_moment_additivity_under_split(pentagon):
    # rectangle [-1,0]x[-1,c] plus trapezoid 0<=x1<=c, -1<=x2<=c-x1
    c = CLW_A - 1
    rect = from_facets([((1, 0), 1), ((-1, 0), 0), ((0, 1), 1), ((0, -1), c)])
    trap = from_facets([((1, 0), 0), ((0, 1), 1), ((-1, 0), c), ((-1, -1), c)])
    for i, j in [(0, 0), (1, 0), (0, 1), (2, 1), (3, 3), (5, 0)]:
        assert polygon_moment(rect, i, j) + polygon_moment(trap, i, j) == pytest.approx(
            polygon_moment(pentagon, i, j), rel=1e-12, abs=1e-14)


def test_boundary_moment_forms_agree(pentagon):
    f = AffineFunctional((0.3, -1.2), 0.7)
    assert boundary_moment(pentagon, f) == pytest.approx(boundary_moment(pentagon, (0.3, -1.2, 0.7)))
    assert boundary_moment(pentagon, lambda x: 0.3 * x[0] - 1.2 * x[1] + 0.7) == pytest.approx(
        boundary_moment(pentagon, f))


def test_constant_boundary_moment_is_weighted_perimeter(pentagon):
    # edges of length a, a, 1, 1 and the slanted one: length (a-1)sqrt2 at density 1/sqrt2
    expected = 2 * (2 * CLW_A + 2 + (CLW_A - 1))
    assert boundary_moment(pentagon, (0, 0, 1)) == pytest.approx(expected, rel=1e-14)


def test_square_target_is_four(square):
    t = solve_extremal_affine(square)
    assert t.a_coeffs == pytest.approx((0.0, 0.0), abs=1e-14)
    assert t.b == pytest.approx(4.0, rel=1e-14)


def test_target_is_symmetric_and_annihilates_futaki(pentagon, target):
    assert target.a_coeffs[0] == pytest.approx(target.a_coeffs[1], rel=1e-13)
    assert np.max(np.abs(target.futaki_residuals(pentagon))) < 1e-12


def test_class_c1_rational_values():
    # a = 2 by exact rational arithmetic: A = -336/409, B = 1572/409
    a = Fraction(2)
    den = a**6 + 6 * a**5 + 9 * a**4 + 4 * a**3 - 3 * a**2 - 6 * a + 1
    assert 48 * (1 - a**3) / den == Fraction(-336, 409)
    assert 12 * (a**5 + 7 * a**4 - 2 * a**3 + 2 * a**2 - 5 * a + 5) / den == Fraction(1572, 409)
    t = solve_extremal_affine(build_clw_pentagon(2.0))
    assert t.a_coeffs[0] == pytest.approx(-336 / 409, rel=1e-12)
    assert t.b == pytest.approx(1572 / 409, rel=1e-12)


def test_closed_form_at_clw_parameter(target):
    A, B = clw_closed_form(CLW_A)
    assert target.a_coeffs[0] == pytest.approx(A, rel=1e-12)
    assert target.b == pytest.approx(B, rel=1e-12)
    assert (A, B) == pytest.approx((-0.84637824065, 3.88658032743), abs=1e-10)


def test_translation_covariance(pentagon, target):
    t = np.array([0.25, -0.4])
    moved = solve_extremal_affine(pentagon.translate(t))
    x = np.array([[0.1, 0.2], [-0.5, 0.3]])
    assert moved(x + t) == pytest.approx(target(x), rel=1e-12)


def test_save_load_roundtrip(tmp_path, pentagon):
    path = tmp_path / "p.json"
    save_polytope(pentagon, path)
    again = load_polytope(path)
    assert np.allclose(again.vertices, pentagon.vertices)
    assert clw_parameter(again) == clw_parameter(pentagon)


def test_load_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"facets": [{"normal": [1, 0]}]}))
    with pytest.raises(MalformedFileError):
        load_polytope(bad)
    with pytest.raises(MalformedFileError):
        load_polytope(tmp_path / "missing.json")


def test_square_builder_validates():
    with pytest.raises(InvalidParameterError):
        build_square(0)
