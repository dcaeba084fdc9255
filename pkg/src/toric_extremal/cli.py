"""Command line: ``toric-extremal {solve,sweep,diagnose}``.

Exit codes: 0 success, 1 error (including bad arguments), 2 optimiser budget
exhausted.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import (
    DiagnosticsRow,
    diagnostics_row,
    einstein_constants,
    rayleigh_minimize,
    stability_report,
)
from .exceptions import ToricError
from .optim import SweepProblem, Termination, degree_sweep
from .polytope import CLW_A, build_clw_pentagon, solve_extremal_affine
from .potential import SymplecticPotential, load_coefficients, save_coefficients
from .quadrature import DIAGNOSE_ORDER, OPTIMIZE_ORDER, clw_split_scheme

log = logging.getLogger("toric_extremal")

EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2

TABLE_COLUMNS = ["Deg", "L2-error", "Max", "Min", "beta", "grad_s_norm", "grad_sinv_norm"]
RUNLOG_COLUMNS = ["degree", "method", "objective", "termination", "iterations",
                  "evaluations", "final_value", "message"]


def fmt(x) -> str:
    """Nine significant digits; integers verbatim."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


@dataclass
class RunConfig:
    a: float = CLW_A
    degrees: tuple[int, ...] = (4,)
    method: str = "lm"
    objective: str = "calabi"
    quad_order: int = OPTIMIZE_ORDER
    out: Path = Path(".")
    fmt: str = "csv"

    def __post_init__(self):
        if any(d < 2 for d in self.degrees):
            raise ValueError("degree must be at least 2")
        if not 2 <= self.quad_order <= 64:
            raise ValueError("quadrature order must lie in [2, 64]")
        if not self.a > 1:
            raise ValueError("class parameter a must exceed 1")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for budget exhaustion
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _degree_range(text: str) -> tuple[int, ...]:
    try:
        lo, hi = (int(p) for p in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    return tuple(range(lo, hi + 1))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="toric-extremal", description="Approximate extremal toric Kähler metrics "
                "on the CLW pentagon.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, default_order):
        if sp is not d:
            sp.add_argument("--a", type=float, default=CLW_A,
                            help="class parameter (default %(default)s)")
        sp.add_argument("--quad-order", type=int, default=default_order,
                        help="Gauss points per direction (default %(default)s)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")

    s = sub.add_parser("solve", help="minimise at one degree from a zero start")
    w = sub.add_parser("sweep", help="warm-started sweep over a degree range")
    d = sub.add_parser("diagnose", help="geometric diagnostics of a coefficient file "
                       "(the class parameter is read from it)")
    common(s, OPTIMIZE_ORDER)
    s.add_argument("--degree", type=int, required=True)
    s.add_argument("--method", choices=["cg", "lm"], default="lm")
    s.add_argument("--objective", choices=["calabi", "conformal"], default="calabi")

    common(w, OPTIMIZE_ORDER)
    w.add_argument("--degrees", type=_degree_range, required=True, metavar="LO..HI")
    w.add_argument("--method", choices=["cg", "lm"], default="lm")
    w.add_argument("--objective", choices=["calabi", "conformal"], default="calabi")
    w.add_argument("--format", dest="fmt", choices=["csv", "json"], default="csv")

    common(d, DIAGNOSE_ORDER)
    d.add_argument("--in", dest="infile", type=Path, required=True)
    return p


# ---------------------------------------------------------------------------


def _problem(cfg: RunConfig):
    poly = build_clw_pentagon(cfg.a)
    target = solve_extremal_affine(poly)
    scheme = clw_split_scheme(poly, cfg.quad_order)
    constants = einstein_constants(target, scheme)
    problem = SweepProblem(poly, target, scheme, cfg.objective, constants.kappa)
    return problem, constants


def _exit_code(term: Termination) -> int:
    if term in (Termination.VALUE_CONVERGED, Termination.STEP_CONVERGED):
        return EXIT_OK
    if term is Termination.BUDGET_EXHAUSTED:
        return EXIT_BUDGET
    return EXIT_ERROR


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, allow_nan=True) + "\n")


def cmd_solve(cfg: RunConfig) -> int:
    (degree,) = cfg.degrees
    problem, constants = _problem(cfg)
    basis = problem.basis(degree)
    report = problem.minimize(degree, np.zeros(len(basis)), cfg.method)
    cfg.out.mkdir(parents=True, exist_ok=True)
    result = report.to_dict()
    result.update(method=cfg.method, objective=cfg.objective, quad_order=cfg.quad_order, a=cfg.a)
    if report.termination is not Termination.INFEASIBLE_START:
        u = SymplecticPotential(problem.polytope, basis, report.final_coeffs)
        save_coefficients(u, cfg.out / f"coeffs_deg{degree}.json", a=cfg.a,
                          metadata={"method": cfg.method, "objective": cfg.objective,
                                    "quad_order": cfg.quad_order,
                                    "termination": report.termination.value})
        try:
            row = diagnostics_row(u, problem.target, constants, problem.scheme)
            result["diagnostics"] = row.to_dict()
        except ToricError as exc:
            result["diagnostics_error"] = str(exc)
    _write_json(cfg.out / f"report_deg{degree}.json", result)
    log.info("degree %d: %s after %d iterations, value %.9g", degree,
             report.termination.value, report.iterations, report.final_value)
    return _exit_code(report.termination)


def _nan_row(degree: int) -> DiagnosticsRow:
    return DiagnosticsRow(degree, *([math.nan] * 6))


def cmd_sweep(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows: list[DiagnosticsRow] = []
    reports = []
    if cfg.degrees:
        problem, constants = _problem(cfg)
        reports = degree_sweep(problem, cfg.degrees, cfg.method, out_dir=cfg.out, a=cfg.a)
        for rep in reports:
            if rep.termination in (Termination.ERROR, Termination.INFEASIBLE_START):
                rows.append(_nan_row(rep.degree))
                continue
            u = SymplecticPotential(problem.polytope, problem.basis(rep.degree), rep.final_coeffs)
            try:
                rows.append(diagnostics_row(u, problem.target, constants, problem.scheme))
            except ToricError as exc:
                log.warning("degree %d diagnostics failed: %s", rep.degree, exc)
                rep.message = rep.message or str(exc)
                rows.append(_nan_row(rep.degree))

    stem = f"table_{cfg.objective}"
    if cfg.fmt == "csv":
        with open(cfg.out / f"{stem}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(TABLE_COLUMNS)
            for r in rows:
                wr.writerow([fmt(r.degree), fmt(r.l2_error), fmt(r.max_dev), fmt(r.min_dev),
                             fmt(r.beta), fmt(r.grad_s_norm), fmt(r.grad_sinv_norm)])
    else:
        _write_json(cfg.out / f"{stem}.json",
                    {"columns": TABLE_COLUMNS, "rows": [r.to_dict() for r in rows]})
    with open(cfg.out / f"runlog_{cfg.objective}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(RUNLOG_COLUMNS)
        for rep in reports:
            wr.writerow([rep.degree, cfg.method, cfg.objective, rep.termination.value,
                         rep.iterations, rep.evaluations, fmt(rep.final_value), rep.message])
    if any(r.termination is Termination.ERROR for r in reports):
        return EXIT_ERROR
    if any(r.termination is Termination.BUDGET_EXHAUSTED for r in reports):
        return EXIT_BUDGET
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, infile: Path) -> int:
    u, data = load_coefficients(infile)
    a = float(data["a"])
    target = solve_extremal_affine(u.polytope)
    scheme = clw_split_scheme(u.polytope, cfg.quad_order)
    constants = einstein_constants(target, scheme)
    row = diagnostics_row(u, target, constants, scheme)
    plus, ep = rayleigh_minimize(u, target, constants, "plus", scheme)
    minus, em = rayleigh_minimize(u, target, constants, "minus", scheme)
    stab = stability_report(u, target, constants, scheme, eigen_plus=ep, eigen_minus=em)
    out = {
        "a": a, "degree": u.basis.degree, "quad_order": cfg.quad_order,
        "diagnostics": row.to_dict(),
        "einstein": constants.to_dict(),
        "eigen": {"plus": {"value_over_lambda": ep, **plus.to_dict()},
                  "minus": {"value_over_lambda": em, **minus.to_dict()}},
        "stability": stab.to_dict(),
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out / "diagnostics.json", out)
    (cfg.out / "diagnostics.txt").write_text(_summary(out))
    return EXIT_OK


def _summary(d: dict) -> str:
    r, e, s = d["diagnostics"], d["einstein"], d["stability"]
    verdict = "unstable" if s["hhs_unstable"] else "no instability detected"
    lines = [
        f"degree {d['degree']}, a = {fmt(d['a'])}, quadrature order {d['quad_order']}",
        f"L2 error        {fmt(r['l2_error'])}",
        f"max / min dev   {fmt(r['max_dev'])} / {fmt(r['min_dev'])}",
        f"beta            {fmt(r['beta'])}",
        f"|grad S|^2      {fmt(r['grad_s_norm'])}",
        f"|grad S^-1|^2   {fmt(r['grad_sinv_norm'])}",
        f"Lambda          {fmt(e['lambda'])}   kappa {fmt(e['kappa'])}",
        f"Einstein volume {fmt(e['einstein_volume'])}",
        f"eigen (+)       {fmt(d['eigen']['plus']['value_over_lambda'])} Lambda",
        f"eigen (-)       {fmt(d['eigen']['minus']['value_over_lambda'])} Lambda",
        f"sup Lap S^2     {fmt(s['max_laplacian_s2'])} (grid {fmt(s['max_laplacian_s2_grid'])}),"
        f" 5kappa/16 = {fmt(s['cone_threshold'])}",
        f"verdict         {verdict}",
    ]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            cfg = RunConfig(args.a, (args.degree,), args.method, args.objective,
                            args.quad_order, args.out)
            return cmd_solve(cfg)
        if args.command == "sweep":
            cfg = RunConfig(args.a, args.degrees, args.method, args.objective,
                            args.quad_order, args.out, args.fmt)
            return cmd_sweep(cfg)
        cfg = RunConfig(degrees=(), quad_order=args.quad_order, out=args.out)
        return cmd_diagnose(cfg, args.infile)
    except (ValueError, ToricError, OSError) as exc:
        print(f"toric-extremal: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
