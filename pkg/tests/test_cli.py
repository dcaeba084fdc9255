import csv
import json

import numpy as np
import pytest

from conftest import PRINTED_QUARTIC, within_sig
from toric_extremal.cli import TABLE_COLUMNS, RunConfig, build_parser, main


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = {}
    for m in ("cg", "lm"):
        d = tmp_path_factory.mktemp(m)
        assert main(["solve", "--degree", "4", "--method", m, "--out", str(d)]) == 0
        out[m] = d
    return out


def test_solve_reproduces_printed_quartic(solved):
    coeffs = json.loads((solved["cg"] / "coeffs_deg4.json").read_text())["coeffs"]
    assert all(within_sig(c, p, 3) for c, p in zip(coeffs, PRINTED_QUARTIC))


def test_solve_methods_agree(solved):
    a = json.loads((solved["cg"] / "coeffs_deg4.json").read_text())["coeffs"]
    b = json.loads((solved["lm"] / "coeffs_deg4.json").read_text())["coeffs"]
    assert np.max(np.abs(np.subtract(a, b))) < 1e-6


def test_solve_report(solved):
    rep = json.loads((solved["lm"] / "report_deg4.json").read_text())
    assert rep["termination"] in ("value-converged", "step-converged")
    assert rep["method"] == "lm" and rep["degree"] == 4
    assert set(rep["diagnostics"]) == {"degree", "l2_error", "max_dev", "min_dev", "beta",
                                       "grad_s_norm", "grad_sinv_norm"}


def test_diagnose_roundtrip_is_bit_identical(solved, tmp_path):
    assert main(["diagnose", "--in", str(solved["lm"] / "coeffs_deg4.json"),
                 "--quad-order", "10", "--out", str(tmp_path)]) == 0
    ran = json.loads((solved["lm"] / "report_deg4.json").read_text())["diagnostics"]
    loaded = json.loads((tmp_path / "diagnostics.json").read_text())["diagnostics"]
    assert loaded == ran
    assert (tmp_path / "diagnostics.txt").read_text().startswith("degree 4")


def test_solve_is_deterministic(solved, tmp_path):
    assert main(["solve", "--degree", "4", "--method", "lm", "--out", str(tmp_path)]) == 0
    for name in ("coeffs_deg4.json", "report_deg4.json"):
        assert (tmp_path / name).read_bytes() == (solved["lm"] / name).read_bytes()


def test_degree_below_two_is_an_error(tmp_path, capsys):
    assert main(["solve", "--degree", "1", "--out", str(tmp_path)]) == 1
    assert "degree" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--degree", "4", "--method", "newton"],
    ["sweep", "--degrees", "2-4"],
    ["frobnicate"],
])
def test_bad_arguments_exit_one(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_quad_order_range(tmp_path):
    assert main(["solve", "--degree", "2", "--quad-order", "65", "--out", str(tmp_path)]) == 1


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(a=0.5)
    with pytest.raises(ValueError):
        RunConfig(quad_order=1)


def test_diagnose_has_no_class_parameter_flag():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["diagnose", "--in", "x.json", "--a", "2"])


def test_empty_sweep_writes_header_only(tmp_path):
    assert main(["sweep", "--degrees", "3..2", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "table_calabi.csv")))
    assert rows == [TABLE_COLUMNS]


def test_sweep_table(tmp_path):
    assert main(["sweep", "--degrees", "2..4", "--objective", "conformal", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "table_conformal.csv")))
    assert [r["Deg"] for r in rows] == ["2", "3", "4"]
    assert list(rows[0]) == TABLE_COLUMNS
    assert float(rows[0]["L2-error"]) == pytest.approx(0.5165, abs=5e-5)
    assert sorted(p.name for p in tmp_path.glob("coeffs_deg*.json")) == \
        ["coeffs_deg2.json", "coeffs_deg3.json", "coeffs_deg4.json"]
    log = list(csv.DictReader(open(tmp_path / "runlog_conformal.csv")))
    assert len(log) == 3


def test_sweep_json_format(tmp_path):
    assert main(["sweep", "--degrees", "2..2", "--format", "json", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "table_calabi.json").read_text())
    assert data["columns"] == TABLE_COLUMNS and len(data["rows"]) == 1


def test_diagnose_canonical_coefficients(tmp_path):
    f = tmp_path / "zero.json"
    f.write_text(json.dumps({"a": 1.9577128052, "degree": 2, "coeffs": [0.0, 0.0]}))
    assert main(["diagnose", "--in", str(f), "--quad-order", "10", "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "diagnostics.json").read_text())
    assert all(np.isfinite(v) for v in d["diagnostics"].values())
    assert d["einstein"]["kappa"] == pytest.approx(60.3456688, abs=1e-6)


@pytest.mark.parametrize("text", ['{"a": 1.9577128052, "degree": 4, "coe', "[]", ""])
def test_diagnose_corrupt_file(tmp_path, text, capsys):
    f = tmp_path / "bad.json"
    f.write_text(text)
    assert main(["diagnose", "--in", str(f), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_diagnose_missing_file(tmp_path):
    assert main(["diagnose", "--in", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
