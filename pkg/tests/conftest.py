import math

import numpy as np
import pytest

from toric_extremal.diagnostics import einstein_constants
from toric_extremal.polytope import build_clw_pentagon, build_square, solve_extremal_affine
from toric_extremal.potential import MonomialBasis, SymplecticPotential
from toric_extremal.quadrature import clw_split_scheme

# degree-4 minimiser as printed to 4 s.f.
PRINTED_QUARTIC = [-0.09962, -0.1333, -0.04195, -0.03139, -0.01471, -0.01119, -0.007613]


def within_sig(ours, printed, n):
    """``ours`` lies within half a unit of the ``n``-th significant figure of
    ``printed``."""
    unit = 10.0 ** (math.floor(math.log10(abs(printed))) - n + 1)
    return abs(ours - printed) <= 0.5 * unit * (1 + 1e-9)


def within_printed(ours, printed: str):
    """``ours`` rounds to the decimal string ``printed`` at its last digit."""
    mant = printed.lower().split("e")[0]
    decimals = len(mant.split(".")[1]) if "." in mant else 0
    exp = int(printed.lower().split("e")[1]) if "e" in printed.lower() else 0
    return abs(ours - float(printed)) <= 0.5 * 10.0 ** (exp - decimals) * (1 + 1e-9)


@pytest.fixture(scope="session")
def pentagon():
    return build_clw_pentagon()


@pytest.fixture(scope="session")
def target(pentagon):
    return solve_extremal_affine(pentagon)


@pytest.fixture(scope="session")
def scheme10(pentagon):
    return clw_split_scheme(pentagon, 10)


@pytest.fixture(scope="session")
def scheme20(pentagon):
    return clw_split_scheme(pentagon, 20)


@pytest.fixture(scope="session")
def constants(target, scheme20):
    return einstein_constants(target, scheme20)


@pytest.fixture(scope="session")
def square():
    return build_square(1.0)


@pytest.fixture(scope="session")
def quartic(pentagon):
    return SymplecticPotential(pentagon, MonomialBasis.of_degree(4), np.array(PRINTED_QUARTIC))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def interior_points(poly, n, rng, margin=0.05):
    """Rejection sample ``n`` points with every facet value above ``margin``."""
    verts = np.asarray(poly.vertices)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    out = []
    while len(out) < n:
        p = rng.uniform(lo, hi)
        if np.all(poly.evaluate_facets(p[None])[0] > margin):
            out.append(p)
    return np.array(out)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def record():
    def _record(number, ok, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
