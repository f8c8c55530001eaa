import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from qmaxent import BellDiagonalState, chsh_observable, critical_b, tsallis, write_matrix
from qmaxent.cli import main, parse_range


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def bell_files(tmp_path):
    B = chsh_observable()
    write_matrix(tmp_path / "B.txt", B)
    write_matrix(tmp_path / "B2.txt", B @ B)
    return tmp_path / "B.txt", tmp_path / "B2.txt"


# ---------------------------------------------------------------------------
# infer


def test_infer_uniform(bell_files, capsys):
    B, _ = bell_files
    code, out, _ = run(["infer", "--functional", "tsallis:q=2", "--observables", B,
                        "--targets", "0"], capsys)
    assert code == 0
    eig = [float(r["value"]) for r in rows(out) if r["quantity"] == "eigenvalue"]
    assert np.allclose(eig, 0.25, atol=1e-10)


def test_infer_dispersion(bell_files, capsys):
    code, out, _ = run(["infer", "--observables", *bell_files, "--targets", "0.4", "0.6"], capsys)
    assert code == 0
    eig = [float(r["value"]) for r in rows(out) if r["quantity"] == "eigenvalue"]
    assert np.allclose(eig, [0.5, 0.2, 0.2, 0.1], atol=1e-9)
    kinds = {r["quantity"] for r in rows(out)}
    assert kinds == {"eigenvalue", "lambda", "entropy", "dual_value", "residual", "curvature",
                     "iterations"}
    assert sum(r["quantity"] == "curvature" for r in rows(out)) == 9


def test_infer_trace_file(bell_files, tmp_path, capsys):
    B, _ = bell_files
    trace = tmp_path / "trace.csv"
    code, _, _ = run(["infer", "--observables", B, "--targets", "0.3", "--trace", trace], capsys)
    assert code == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == "iteration,dual_value,residual_norm,step_length"
    assert float(lines[-1].split(",")[2]) <= 1e-10


def test_infer_malformed_matrix(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 0\n0 oops\n")
    code, _, err = run(["infer", "--observables", bad, "--targets", "0.1"], capsys)
    assert code == 1
    assert "row 2" in err


def test_infer_infeasible(bell_files, capsys):
    B, _ = bell_files
    code, _, err = run(["infer", "--observables", B, "--targets", "1.5"], capsys)
    assert code == 2
    assert err


def test_infer_usage_errors(bell_files, tmp_path, capsys):
    B, _ = bell_files
    assert run(["infer", "--observables", B], capsys)[0] == 1
    assert run(["infer", "--observables", B, "--targets", "0.1", "0.2"], capsys)[0] == 1
    assert run(["infer", "--observables", tmp_path / "missing.txt", "--targets", "0"], capsys)[0] == 1
    assert run(["infer", "--functional", "renyi", "--observables", B, "--targets", "0"], capsys)[0] == 1


def test_unknown_command(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 1


# ---------------------------------------------------------------------------
# bell


def test_bell_shannon_closed_form(capsys):
    code, out, _ = run(["bell", "--functional", "shannon", "--b-range", "0:1:0.01"], capsys)
    assert code == 0
    table = rows(out)
    assert len(table) == 101
    assert list(table[0]) == ["b", "p_plus", "p_minus", "p_zero", "lambda0", "lambda1", "S_f",
                              "regime", "concurrence", "fake"]
    for r in table:
        b = float(r["b"])
        assert float(r["p_plus"]) == pytest.approx((1 + b) ** 2 / 4, abs=1e-10)
    assert float(table[-1]["concurrence"]) == 1.0


def test_bell_tsallis_two_never_fake(capsys):
    _, out, _ = run(["bell", "--functional", "tsallis:q=2"], capsys)
    assert {r["fake"] for r in rows(out)} == {"false"}


def test_bell_rows_roundtrip(capsys):
    _, out, _ = run(["bell", "--functional", "exponential:q=-4", "--b-range=-1:1:0.05"], capsys)
    B = chsh_observable()
    for r in rows(out):
        st = BellDiagonalState(float(r["p_plus"]), float(r["p_minus"]), float(r["p_zero"]))
        assert np.trace(st.matrix() @ B).real == pytest.approx(float(r["b"]), abs=1e-10)


def test_bell_alpha(capsys):
    code, out, _ = run(["bell", "--alpha", "0.5", "--b-range", "0:0.9:0.3"], capsys)
    assert code == 0
    assert len(rows(out)) == 4
    assert run(["bell", "--alpha", "0.5", "--b-range=-0.3:0:0.1"], capsys)[0] == 1


def test_bell_output_file_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(["bell", "--functional", "tsallis:q=3", "--out", path], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_bad_range(capsys):
    assert run(["bell", "--b-range", "0:1:0"], capsys)[0] == 1
    assert run(["bell", "--b-range", "1:0:0.1"], capsys)[0] == 1
    assert run(["bell", "--b-range", "0:2:0.5"], capsys)[0] == 1


def test_parse_range_grid():
    assert parse_range("0:1:0.1", "b") == [round(0.1 * k, 12) for k in range(11)]
    assert parse_range("-4:4:2", "q") == [-4.0, -2.0, 0.0, 2.0, 4.0]


# ---------------------------------------------------------------------------
# phase


def test_phase_tsallis(capsys):
    code, out, _ = run(["phase", "--family", "tsallis", "--q-range", "1.5:10:0.5"], capsys)
    assert code == 0
    table = rows(out)
    bc = [float(r["b_c"]) for r in table]
    assert all(np.diff(bc) < 0)
    row2 = next(r for r in table if float(r["q"]) == 2.0)
    assert float(row2["b_c"]) == pytest.approx(0.5, abs=1e-14)
    assert row2["fake_lo"] == "" and row2["fake_hi"] == ""
    row15 = table[0]
    assert float(row15["fake_lo"]) < 0.5 and float(row15["fake_hi"]) == 0.5


def test_phase_exponential(capsys):
    code, out, _ = run(["phase", "--family", "exponential", "--q-range", "0.5:20:0.5"], capsys)
    assert code == 0
    assert all(float(r["b_c"]) < 0.5 for r in rows(out))


def test_phase_bad_family(capsys):
    assert run(["phase", "--family", "renyi"], capsys)[0] == 1


# ---------------------------------------------------------------------------
# thermo


def test_thermo_bell_point(capsys):
    code, out, _ = run(["thermo", "--b", "0.3", "--functional", "shannon"], capsys)
    assert code == 0
    table = rows(out)
    checks = {r["item"]: r for r in table if r["status"]}
    assert set(checks) == {"gradient", "curvature", "curvature_psd", "sensitivity_nsd",
                           "multiplier_sensitivity"}
    assert all(r["status"] == "pass" for r in checks.values())
    assert float(checks["gradient"]["tolerance"]) == 1e-6
    assert float(checks["curvature"]["tolerance"]) == 1e-5
    assert sum(r["item"] == "sensitivity" for r in table) == 4


def test_thermo_with_files(bell_files, capsys):
    B, _ = bell_files
    code, _, _ = run(["thermo", "--observables", B, "--targets", "0.3",
                      "--functional", "exponential:q=1"], capsys)
    assert code == 0


# ---------------------------------------------------------------------------
# configuration


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[qmaxent]\nfunctional = tsallis:q=2\n\n[bell]\nb-range = 0:0.5:0.25\n")
    _, out, _ = run(["bell", "--config", cfg], capsys)
    table = rows(out)
    assert [r["b"] for r in table] == ["0.0", "0.25", "0.5"]
    assert float(table[1]["p_plus"]) == pytest.approx(0.25 * 1.5, abs=1e-12)
    # flags win over the file
    _, out, _ = run(["bell", "--config", cfg, "--functional", "shannon"], capsys)
    assert float(rows(out)[1]["p_plus"]) == pytest.approx(1.25 ** 2 / 4, abs=1e-12)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[qmaxent]\ncolour = blue\n")
    code, _, err = run(["bell", "--config", cfg], capsys)
    assert code == 1 and "colour" in err


def test_config_deterministic_twice(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[bell]\nfunctional = exponential:q=3\nb-range = 0:1:0.05\n")
    outs = []
    for name in ("x.csv", "y.csv"):
        run(["bell", "--config", cfg, "--out", tmp_path / name], capsys)
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "qmaxent.cli", "phase", "--q-range", "2:3:1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "q,b_c,fake_lo,fake_hi"
    assert float(proc.stdout.splitlines()[2].split(",")[1]) == pytest.approx(critical_b(tsallis(3)))
