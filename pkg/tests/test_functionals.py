import math

import numpy as np
import pytest

from conftest import PRINTED_QUARTIC
from toric_extremal.exceptions import InfeasibleIntegrandError, InvalidParameterError
from toric_extremal.functionals import (
    FOUR_PI_SQ,
    CalabiObjective,
    ConformalObjective,
    beta_residual,
    conformal_defect_terms,
    conformal_objective,
    l2_error,
    modified_calabi,
    residual_vector,
    volume_normalisation,
)
from toric_extremal.polytope import build_clw_pentagon, solve_extremal_affine
from toric_extremal.potential import MonomialBasis, PointEvaluator, SymplecticPotential
from toric_extremal.quadrature import triangulated_scheme


def _fd_gradient(f, c, h=1e-6):
    out = np.empty_like(c)
    for i in range(len(c)):
        e = np.zeros_like(c)
        e[i] = h
        out[i] = (f(c + e).value - f(c - e).value) / (2 * h)
    return out


@pytest.fixture(scope="module")
def quartic_coeffs():
    return np.array(PRINTED_QUARTIC)


def test_volume_normalisation_closed_form():
    for a in (1.5, 1.9577128052, 2.7):
        assert volume_normalisation(build_clw_pentagon(a)) == pytest.approx(2 / (a * a + 2 * a - 1))


def test_calabi_gradient_matches_finite_differences(pentagon, target, scheme10, quartic_coeffs):
    obj = CalabiObjective(pentagon, MonomialBasis.of_degree(4), target, scheme10)
    g = obj(quartic_coeffs).gradient
    assert np.allclose(g, _fd_gradient(obj, quartic_coeffs), rtol=1e-5, atol=1e-8)


def test_conformal_gradient_matches_finite_differences(pentagon, target, scheme10, constants,
                                                       quartic_coeffs):
    obj = ConformalObjective(pentagon, MonomialBasis.of_degree(4), target, scheme10, constants.kappa)
    g = obj(quartic_coeffs).gradient
    assert np.allclose(g, _fd_gradient(obj, quartic_coeffs), rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("kind", ["calabi", "conformal"])
def test_residuals_consistent_with_value(pentagon, target, scheme10, constants, quartic_coeffs, kind):
    basis = MonomialBasis.of_degree(4)
    if kind == "calabi":
        obj = CalabiObjective(pentagon, basis, target, scheme10)
    else:
        obj = ConformalObjective(pentagon, basis, target, scheme10, constants.kappa)
    ev = obj(quartic_coeffs)
    res = obj.residuals(quartic_coeffs)
    assert FOUR_PI_SQ * res.sum_of_squares == pytest.approx(ev.value, rel=1e-12)
    # J^T r is the gradient up to the 2 * 4π² factor
    assert np.allclose(2 * FOUR_PI_SQ * res.jacobian.T @ res.residuals, ev.gradient, rtol=1e-10)


def test_infeasible_coefficients(pentagon, target, scheme10):
    obj = CalabiObjective(pentagon, MonomialBasis.of_degree(2), target, scheme10)
    bad = np.array([0.0, -50.0])
    assert not obj(bad).feasible
    assert obj(bad).value == math.inf
    assert not obj.residuals(bad).feasible
    u = SymplecticPotential(pentagon, MonomialBasis.of_degree(2), bad)
    assert l2_error(u, target, scheme10) == math.inf
    with pytest.raises(InfeasibleIntegrandError):
        residual_vector(u, target, scheme10)


def test_conformal_defect_on_canonical_square(square):
    # S = 4 with a flat target, so the defect is kappa - 64
    target = solve_extremal_affine(square)
    x = np.array([[0.1, -0.3], [0.5, 0.5]])
    ev = PointEvaluator(square, MonomialBasis.of_degree(2), x)
    G, dG, _ = ev.inverse_jet(np.zeros(2))
    D, S, grad_sq, lap = conformal_defect_terms(target, 64.0, x, G, dG)
    assert np.allclose(S, 4.0)
    assert np.allclose(grad_sq, 0.0, atol=1e-14)
    assert np.allclose(D, 0.0, atol=1e-12)


def test_conformal_needs_positive_kappa(pentagon, target, scheme10):
    with pytest.raises(InvalidParameterError):
        ConformalObjective(pentagon, MonomialBasis.of_degree(2), target, scheme10, 0.0)


def test_l2_error_of_printed_quartic(quartic, target, scheme10):
    # degree-4 row of the Calabi table
    assert l2_error(quartic, target, scheme10) == pytest.approx(0.13, abs=0.005)


def test_beta_of_printed_quartic(quartic, target, constants, scheme10):
    assert beta_residual(quartic, target, constants.kappa, scheme10) == pytest.approx(0.35, abs=0.005)


def test_potential_level_wrappers_agree(quartic, target, constants, scheme10):
    obj = CalabiObjective(quartic.polytope, quartic.basis, target, scheme10)
    assert modified_calabi(quartic, target, scheme10).value == obj(quartic.coeffs).value
    conf = ConformalObjective(quartic.polytope, quartic.basis, target, scheme10, constants.kappa)
    assert conformal_objective(quartic, target, constants.kappa, scheme10).value == conf(quartic.coeffs).value


def test_objective_independent_of_translation():
    # shifting the polytope and the potential together leaves the energy unchanged
    poly = build_clw_pentagon()
    shifted = poly.translate([0.3, 0.3])
    vals = []
    for p in (poly, shifted):
        t = solve_extremal_affine(p)
        sch = triangulated_scheme(p, 8)
        vals.append(CalabiObjective(p, MonomialBasis.of_degree(2), t, sch)(np.zeros(2)).value)
    assert vals[0] == pytest.approx(vals[1], rel=1e-9)
