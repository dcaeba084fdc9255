import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import PRINTED_QUARTIC
from toric_extremal import ExtremalPotential
from toric_extremal.estimator import check_points
from toric_extremal.exceptions import InvalidParameterError


@pytest.fixture(scope="module")
def fitted():
    return ExtremalPotential(degree=4).fit()


def test_params_roundtrip():
    est = ExtremalPotential(degree=6, method="cg", quad_order=12)
    params = est.get_params()
    assert params["degree"] == 6 and params["method"] == "cg" and params["quad_order"] == 12
    assert clone(est).get_params() == params


def test_fit_reproduces_quartic(fitted):
    assert fitted.coef_.shape == (7,)
    assert np.allclose(fitted.coef_, PRINTED_QUARTIC, rtol=5e-3)
    assert [r.degree for r in fitted.reports_] == [2, 3, 4]
    assert fitted.n_iter_ == fitted.report_.iterations


def test_predict_and_transform(fitted):
    X = np.array([[0.0, 0.0], [-0.5, 0.3]])
    S = fitted.predict(X)
    assert S.shape == (2,)
    dev = fitted.transform(X)
    assert dev.shape == (2, 1)
    assert np.allclose(dev[:, 0], S - fitted.target_(X))
    assert np.all(np.abs(dev) < 1.5)


def test_score_is_negative_l2_error(fitted):
    assert fitted.score() == pytest.approx(-0.13, abs=0.005)


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        ExtremalPotential().predict([[0.0, 0.0]])


@pytest.mark.parametrize("kw", [dict(degree=1), dict(method="bfgs"), dict(objective="ricci"),
                                dict(quad_order=1)])
def test_invalid_params(kw):
    with pytest.raises(InvalidParameterError):
        ExtremalPotential(**kw).fit()


def test_check_points_shape():
    with pytest.raises(InvalidParameterError):
        check_points(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        check_points([[np.nan, 0.0]])


def test_cold_start_matches_warm_start(fitted):
    cold = ExtremalPotential(degree=4, warm_start=False).fit()
    assert np.allclose(cold.coef_, fitted.coef_, atol=1e-6)


def test_conformal_fit_sets_kappa():
    est = ExtremalPotential(degree=3, objective="conformal").fit()
    assert est.kappa_ == pytest.approx(60.3456688, abs=1e-6)
