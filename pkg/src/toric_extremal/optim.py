"""Minimisers for the reduced objectives.

* :func:`cg_minimize` -- Polak-Ribière conjugate gradients (non-negative beta),
  with each line minimisation done by Ridders' method on the directional
  derivative, restarting along the steepest descent every round.
* :func:`lm_minimize` -- Levenberg-Marquardt with Marquardt's diagonal scaling.
* :func:`degree_sweep` -- warm-started runs over increasing truncation degree.

Objectives are callables ``c -> ObjectiveEval``; residual functions are
callables ``c -> ResidualVector`` (with Jacobian).  An infeasible evaluation
behaves like ``+inf`` and is never accepted.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    InfeasibleStartError,
    InvalidParameterError,
    NoSignChangeError,
    SingularNormalEquationsError,
    ToricError,
)
from .functionals import FOUR_PI_SQ, CalabiObjective, ConformalObjective, ObjectiveEval
from .polytope import ExtremalAffineTarget, MomentPolytope
from .potential import MonomialBasis, SymplecticPotential, save_coefficients
from .quadrature import PolytopeQuadrature

log = logging.getLogger(__name__)


class Termination(str, enum.Enum):
    VALUE_CONVERGED = "value-converged"
    STEP_CONVERGED = "step-converged"
    BUDGET_EXHAUSTED = "budget-exhausted"
    INFEASIBLE_START = "infeasible-start"
    ERROR = "error"


@dataclass
class CgConfig:
    max_rounds: int = 25
    steps_per_round: int | None = None  # None -> 4 * number of coefficients
    value_tolerance: float = 1e-9
    line_search_bracket: float = 1.0

    def __post_init__(self):
        if self.max_rounds <= 0 or self.value_tolerance <= 0 or self.line_search_bracket <= 0:
            raise InvalidParameterError("CG settings must be positive")
        if self.steps_per_round is not None and self.steps_per_round <= 0:
            raise InvalidParameterError("steps_per_round must be positive")


@dataclass
class LmConfig:
    function_tolerance: float = 1e-13
    step_tolerance: float = 1e-13
    max_evaluations: int = 6000
    initial_damping: float = 1e-2

    def __post_init__(self):
        if min(self.function_tolerance, self.step_tolerance, self.initial_damping) <= 0 \
                or self.max_evaluations <= 0:
            raise InvalidParameterError("LM settings must be positive")


@dataclass
class OptimReport:
    final_coeffs: np.ndarray
    final_value: float
    iterations: int
    evaluations: int
    termination: Termination
    history: list[dict] = field(default_factory=list, repr=False)
    degree: int | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "final_coeffs": [float(c) for c in self.final_coeffs],
            "final_value": self.final_value,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "termination": self.termination.value,
            "message": self.message,
        }


# ---------------------------------------------------------------------------
# Ridders' method


def ridder_root(g, bracket, ftol: float = 1e-12, xtol: float = 1e-14,
                max_iter: int = 60, max_expand: int = 50) -> float:
    """Root of ``g`` in ``bracket`` by Ridders' exponential-fit iteration.

    If ``g`` does not change sign over the bracket it is widened (the end with
    the smaller ``|g|`` moves out, doubling the width) up to ``max_expand``
    times.  Stops when ``|g(t)| <= ftol * scale`` (``scale`` being the larger
    endpoint magnitude) or the bracket is narrower than ``xtol``.
    """
    lo, hi = map(float, bracket)
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = g(lo), g(hi)
    n = 0
    while flo * fhi > 0:
        if n == max_expand:
            raise NoSignChangeError(f"no sign change of g on [{lo}, {hi}]")
        width = hi - lo if hi > lo else 1.0
        if abs(flo) < abs(fhi):
            lo -= width
            flo = g(lo)
        else:
            hi += width
            fhi = g(hi)
        n += 1
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    scale = max(abs(flo), abs(fhi))
    ans = math.nan
    for _ in range(max_iter):
        xm = 0.5 * (lo + hi)
        fm = g(xm)
        s = math.sqrt(fm * fm - flo * fhi)
        if s == 0.0:
            return xm
        xnew = xm + (xm - lo) * (math.copysign(1.0, flo - fhi) * fm / s)
        if abs(xnew - ans) <= xtol:
            return xnew
        ans = xnew
        fnew = g(ans)
        if abs(fnew) <= ftol * scale:
            return ans
        if math.copysign(fm, fnew) != fm:
            lo, flo, hi, fhi = xm, fm, ans, fnew
        elif math.copysign(flo, fnew) != flo:
            hi, fhi = ans, fnew
        elif math.copysign(fhi, fnew) != fhi:
            lo, flo = ans, fnew
        else:  # pragma: no cover - only reachable with NaN
            break
        if abs(hi - lo) <= xtol:
            return ans
    return ans


# ---------------------------------------------------------------------------
# conjugate gradients


def _line_minimize(objective, x, h, ev0: ObjectiveEval, bracket: float):
    """Minimise ``t -> objective(x + t h)`` over ``t > 0``.

    Returns ``(t, ObjectiveEval)`` or ``(0, ev0)`` when no descent is found.
    """
    cache: dict[float, ObjectiveEval] = {0.0: ev0}

    def at(t):
        if t not in cache:
            cache[t] = objective(x + t * h)
        return cache[t]

    def slope(t):
        e = at(t)
        return float(e.gradient @ h) if e.feasible else math.inf

    lo = 0.0
    t = bracket / float(np.linalg.norm(h))
    hi = None
    while t - lo > 1e-14 * max(1.0, lo):
        e = at(t)
        # shrink until the value does not rise; a rising end may enclose a
        # far stationary point instead of the minimum next to lo
        if not e.feasible or e.value > at(lo).value:
            t = lo + 0.5 * (t - lo)
            continue
        if slope(t) >= 0:
            hi = t
            break
        lo, t = t, 2.0 * t
    if hi is None:
        return (lo, at(lo)) if lo > 0 else (0.0, ev0)

    t_star = ridder_root(slope, (lo, hi), ftol=1e-10, xtol=1e-15 * max(1.0, hi))
    best = min((lo, hi, t_star), key=lambda s: (at(s).value, s))
    return best, at(best)


def cg_minimize(objective, x0, cfg: CgConfig | None = None) -> OptimReport:
    """Polak-Ribière conjugate-gradient minimisation.

    Each round performs ``steps_per_round`` line minimisations starting from
    the steepest-descent direction; the run stops once a whole round changes
    the objective by less than ``value_tolerance`` or after ``max_rounds``.
    The first trial step of each line search is ten times the previous step
    (capped at ``line_search_bracket``).
    """
    cfg = cfg or CgConfig()
    x = np.array(x0, dtype=float)
    ev = objective(x)
    evals = 1
    if not ev.feasible:
        return OptimReport(x, math.inf, 0, evals, Termination.INFEASIBLE_START,
                           message="objective infeasible at the starting point")
    steps = cfg.steps_per_round or 4 * len(x)
    history = [{"iteration": 0, "value": ev.value,
                "grad_norm": float(np.linalg.norm(ev.gradient)), "step": 0.0}]
    termination = Termination.BUDGET_EXHAUSTED
    it = 0
    n_calls = [0]
    last_step = math.inf

    def counted(c):
        n_calls[0] += 1
        return objective(c)

    for _ in range(cfg.max_rounds):
        start_value = ev.value
        r = -ev.gradient
        h = r.copy()
        for _ in range(steps):
            rr = float(r @ r)
            if rr == 0.0:
                break
            if float(r @ h) <= 0:
                h = r.copy()
            # first trial a little beyond the previous step; the search widens if short
            bracket = min(cfg.line_search_bracket, 10.0 * last_step)
            t, new = _line_minimize(counted, x, h, ev, bracket)
            if t == 0.0:
                break
            last_step = t * float(np.linalg.norm(h))
            x = x + t * h
            it += 1
            r_new = -new.gradient
            beta = max(0.0, float(r_new @ (r_new - r)) / rr)
            h = r_new + beta * h
            r = r_new
            ev = new
            history.append({"iteration": it, "value": ev.value,
                            "grad_norm": float(np.linalg.norm(r)),
                            "step": last_step})
        log.debug("cg round done: value=%.12g", ev.value)
        if abs(start_value - ev.value) < cfg.value_tolerance:
            termination = Termination.VALUE_CONVERGED
            break
    return OptimReport(x, ev.value, it, evals + n_calls[0], termination, history)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt


def lm_minimize(residual, x0, cfg: LmConfig | None = None) -> OptimReport:
    """Levenberg-Marquardt on ``c -> ResidualVector``.

    Solves ``(J^T J + λ diag(J^T J)) δ = -J^T r``; an accepted step (strict
    decrease of the sum of squares) divides ``λ`` by 10, a rejected one
    multiplies it by 10.
    """
    cfg = cfg or LmConfig()
    x = np.array(x0, dtype=float)
    res = residual(x)
    evals = 1
    if not res.feasible:
        return OptimReport(x, math.inf, 0, evals, Termination.INFEASIBLE_START,
                           message="residual infeasible at the starting point")
    ss = res.sum_of_squares
    lam = cfg.initial_damping
    history = [{"iteration": 0, "value": ss, "grad_norm": float(np.linalg.norm(res.jacobian.T @ res.residuals)),
                "step": 0.0}]
    it = 0
    while True:
        J, r = res.jacobian, res.residuals
        A = J.T @ J
        grad = J.T @ r
        d = np.diag(A).copy()
        accepted = False
        while not accepted:
            if evals >= cfg.max_evaluations:
                return OptimReport(x, ss, it, evals, Termination.BUDGET_EXHAUSTED, history)
            delta = _damped_step(A, d, grad, lam)
            if delta is None:
                lam *= 10.0
                if lam > 1e12:
                    raise SingularNormalEquationsError(
                        "normal equations singular for all damping values; degenerate basis?")
                continue
            trial = residual(x + delta)
            evals += 1
            step_norm = float(np.linalg.norm(delta))
            small_step = step_norm <= cfg.step_tolerance * (cfg.step_tolerance + np.linalg.norm(x))
            if trial.feasible and trial.sum_of_squares < ss:
                accepted = True
                it += 1
                old = ss
                x = x + delta
                res, ss = trial, trial.sum_of_squares
                lam = max(lam / 10.0, 1e-15)
                history.append({"iteration": it, "value": ss,
                                "grad_norm": float(np.linalg.norm(grad)), "step": step_norm})
                if abs(old - ss) <= cfg.function_tolerance * max(old, 1e-300):
                    return OptimReport(x, ss, it, evals, Termination.VALUE_CONVERGED, history)
                if small_step:
                    return OptimReport(x, ss, it, evals, Termination.STEP_CONVERGED, history)
            else:
                if small_step:
                    return OptimReport(x, ss, it, evals, Termination.STEP_CONVERGED, history)
                lam *= 10.0
                if lam > 1e20:
                    return OptimReport(x, ss, it, evals, Termination.STEP_CONVERGED, history,
                                       message="damping saturated without decrease")


def _damped_step(A, d, grad, lam):
    M = A + lam * np.diag(d)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    if np.min(np.abs(np.diag(L))) <= 1e-150:
        return None
    y = np.linalg.solve(L, -grad)
    return np.linalg.solve(L.T, y)


# ---------------------------------------------------------------------------
# degree sweeps


@dataclass
class SweepProblem:
    """Everything needed to build the reduced objective at a given degree."""

    polytope: MomentPolytope
    target: ExtremalAffineTarget
    scheme: PolytopeQuadrature
    objective: str = "calabi"
    kappa: float | None = None
    symmetric: bool = True

    def __post_init__(self):
        if self.objective not in ("calabi", "conformal"):
            raise InvalidParameterError(f"unknown objective {self.objective!r}")
        if self.objective == "conformal" and self.kappa is None:
            raise InvalidParameterError("the conformal objective needs kappa")

    def basis(self, degree: int) -> MonomialBasis:
        return MonomialBasis.of_degree(degree, self.symmetric)

    def build(self, degree: int):
        basis = self.basis(degree)
        if self.objective == "calabi":
            return CalabiObjective(self.polytope, basis, self.target, self.scheme)
        return ConformalObjective(self.polytope, basis, self.target, self.scheme, self.kappa)

    def minimize(self, degree: int, x0, method: str = "cg", cg: CgConfig | None = None,
                 lm: LmConfig | None = None) -> OptimReport:
        obj = self.build(degree)
        if method == "cg":
            report = cg_minimize(obj, x0, cg)
        elif method == "lm":
            report = lm_minimize(obj.residuals, x0, lm)
            # residuals omit the torus volume; report the same energy as CG
            report.final_value *= FOUR_PI_SQ
        else:
            raise InvalidParameterError(f"unknown method {method!r}")
        report.degree = degree
        return report


def degree_sweep(problem: SweepProblem, degrees, method: str = "cg", cg: CgConfig | None = None,
                 lm: LmConfig | None = None, out_dir=None, a: float | None = None,
                 x0=None) -> list[OptimReport]:
    """Minimise at each degree, warm-starting from the previous optimum.

    Coefficients of the previous degree are carried over and new terms start
    at zero.  A failed degree is reported with ``Termination.ERROR`` and the
    next one starts cold.  With ``out_dir`` each optimum is written as
    ``coeffs_deg{d}.json``.
    """
    degrees = list(degrees)
    if any(b <= a_ for a_, b in zip(degrees, degrees[1:])):
        raise InvalidParameterError("degrees must be increasing")
    reports: list[OptimReport] = []
    prev: SymplecticPotential | None = None
    if x0 is not None and degrees:
        prev = SymplecticPotential(problem.polytope, problem.basis(degrees[0]), x0)
    for d in degrees:
        basis = problem.basis(d)
        start = np.zeros(len(basis)) if prev is None else prev.padded(d).coeffs
        try:
            report = problem.minimize(d, start, method, cg, lm)
        except ToricError as exc:
            log.warning("degree %d failed: %s", d, exc)
            reports.append(OptimReport(start, math.nan, 0, 0, Termination.ERROR, degree=d,
                                       message=str(exc)))
            prev = None
            continue
        reports.append(report)
        if report.termination is Termination.INFEASIBLE_START:
            prev = None
            continue
        prev = SymplecticPotential(problem.polytope, basis, report.final_coeffs)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_coefficients(prev, out / f"coeffs_deg{d}.json", a=a,
                              metadata={"method": method, "objective": problem.objective,
                                        "quad_order": problem.scheme.order,
                                        "termination": report.termination.value})
    return reports
