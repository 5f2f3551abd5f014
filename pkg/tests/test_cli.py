import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate

from gmwbhit import cli
from gmwbhit.hitting import cdf_tau, laplace_tau, prob_finite_tau


def run(argv, capsys):
    code = cli.main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_grid_parse():
    g = cli.Grid.parse("0.5:2:4")
    assert np.allclose(g.points(), [0.5, 1.0, 1.5, 2.0])
    for bad in ("1:2", "a:b:c", "2:1:5", "0:1:0"):
        with pytest.raises(Exception):
            cli.Grid.parse(bad)


def test_table1_check(capsys):
    code, out, _ = run(["table1", "--check"], capsys)
    assert code == 0
    table = rows(out)
    assert table[0] == ["w_over_G", "sigma", "m_bp"]
    cells = {(float(a), float(b)): int(c) for a, b, c in table[1:]}
    assert cells == {k: v for k, v in cli.GOLDEN_TABLE1.items()}
    assert cells[(0.06, 0.3)] == 104


def test_table2_cells(capsys):
    code, out, _ = run(["--command", "table2", "--check"], capsys)
    assert code == 0
    table = rows(out)
    assert table[0] == ["w_over_G", "sigma", "m_bp", "m_w_bp"]
    cells = {(float(a), float(b)): (int(c), int(d)) for a, b, c, d in table[1:]}
    assert cells[(0.08, 0.2)] == (90, 72)
    for m, mw in cells.values():
        assert abs(mw - 0.8 * m) <= 1.0


def test_table_check_flags_mismatch():
    golden = dict(cli.GOLDEN_TABLE1)
    golden[(0.07, 0.2)] = 56
    cfg = cli.RunConfig("table1", cli.gmwb.ModelParams(0.05, 0.2, 100, 7, 0, 0), check=True)
    out = cli.run_table(1, cfg, golden)
    assert out.code == cli.EXIT_CHECK
    assert any("0.07" in n for n in out.notes)
    # a 1 bp disagreement is inside the rounding band
    golden[(0.07, 0.2)] = 55
    assert cli.run_table(1, cfg, golden).code == cli.EXIT_OK
    assert golden is not cli.GOLDEN_TABLE1 and cli.GOLDEN_TABLE1[(0.07, 0.2)] == 54


def test_fair_fee(capsys):
    code, out, _ = run(["fair-fee", "--sigma", "0.3", "--w", "5", "--fee-link", "0.8",
                        "--side", "insurer"], capsys)
    assert code == 0
    (hdr, rec) = rows(out)
    assert hdr == ["side", "m", "m_w", "m_bp", "m_w_bp"]
    assert rec[0] == "insurer" and rec[3:] == ["101", "81"]


def test_fair_fee_no_bracket(capsys):
    code, out, err = run(["fair-fee", "--sigma", "0.9", "--w", "20", "--side", "insurer"], capsys)
    assert code == 1
    assert "NoBracket" in err
    assert rows(out)[1][1] == "nan"


def test_equivalence(capsys):
    code, out, _ = run(["equivalence", "--sigma", "0.3", "--w", "6", "--grid", "0.002:0.02:3",
                        "--format", "json"], capsys)
    assert code == 0
    recs = json.loads(out)
    assert len(recs) == 3
    for r in recs:
        assert abs(r["residual"]) < 1e-5 * 100
        assert abs(r["policyholder_gap"] - r["insurer_gap"] - r["residual"]) < 1e-9


def test_density_H_both(capsys):
    code, out, _ = run(["density", "--law", "H", "--nu", "1", "--level", "0.5", "--both",
                        "--grid", "0.25:2:4"], capsys)
    assert code == 0
    table = rows(out)
    assert table[0] == ["u", "density_second", "density_first"]
    assert max(abs(float(a) - float(b)) for _, a, b in table[1:]) <= 1e-6


def test_density_tau_mass(capsys):
    code, out, _ = run(["density", "--law", "tau", "--nu", "1", "--level", "0.5",
                        "--grid", "0.002:20:2000"], capsys)
    assert code == 0
    data = np.array([[float(x) for x in r] for r in rows(out)[1:]])
    mass = integrate.trapezoid(data[:, 1], data[:, 0])
    tail = prob_finite_tau(1.0, 0.5) - cdf_tau(1.0, 0.5, 20.0)
    assert abs(mass + tail - prob_finite_tau(1.0, 0.5)) < 1e-4


def test_cdf_A_small_time(capsys):
    code, out, _ = run(["cdf", "--law", "A", "--nu", "1", "--t", "1e-4", "--grid", "0.1:2:5"], capsys)
    assert code == 0
    table = rows(out)
    assert table[0] == ["y", "cdf"]
    assert all(abs(float(v) - 1.0) < 1e-12 for _, v in table[1:])


def test_cdf_tau(capsys):
    code, out, _ = run(["cdf", "--law", "tau", "--nu", "-1", "--grid", "0.5:4:4"], capsys)
    assert code == 0
    vals = [float(v) for _, v in rows(out)[1:]]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_laplace_both(capsys):
    code, out, _ = run(["laplace", "--law", "H", "--nu", "1", "--grid", "0.5:2:2", "--both"], capsys)
    assert code == 0
    for _, a, b in rows(out)[1:]:
        assert abs(float(a) - float(b)) < 1e-6 * float(a)


def test_point_failure_is_nan(capsys):
    code, out, err = run(["density", "--law", "H", "--nu", "-1", "--grid", "0.5:1:2"], capsys)
    assert code == 1
    assert [r[1] for r in rows(out)[1:]] == ["nan", "nan"]
    assert "DomainError" in err


def test_output_file_byte_stable(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert cli.main(["density", "--law", "tau", "--nu", "0.5", "--grid", "0.2:2:7",
                         "--out", str(p)]) == 0
    raw = [p.read_bytes() for p in paths]
    assert raw[0] == raw[1]
    assert b"\r" not in raw[0] and raw[0].endswith(b"\n")
    assert capsys.readouterr().out == ""


def test_json_full_precision(capsys):
    code, out, _ = run(["laplace", "--law", "tau", "--nu", "0.3", "--grid", "1:1:1", "--format", "json"],
                       capsys)
    assert code == 0
    rec = json.loads(out)[0]
    assert rec["laplace"] == laplace_tau(0.3, 0.5, 1.0)


def test_missing_command():
    with pytest.raises(SystemExit):
        cli.main([])


def test_bad_grid_rejected():
    with pytest.raises(SystemExit):
        cli.main(["density", "--grid", "1:0:5"])


def test_invalid_params_exit(capsys):
    code, _, err = run(["fair-fee", "--sigma", "-0.2"], capsys)
    assert code == 1 and "DomainError" in err


def test_verify_analytic_only(capsys):
    code, out, _ = run(["verify", "--skip-mc"], capsys)
    report = json.loads(out)
    assert code == 0 and report["passed"]
    names = [c["name"] for c in report["checks"]]
    assert names and not any(n.startswith("mc_") for n in names)


def test_verify_tampered_golden():
    # a golden fee moved by 1e-3 per year (10 bp) must be caught
    golden = dict(cli.GOLDEN_TABLE1)
    golden[(0.05, 0.3)] += 10
    cfg = cli.RunConfig("verify", cli.gmwb.ModelParams(0.05, 0.2, 100, 7, 0, 0), skip_mc=True)
    out = cli.run_verify(cfg, golden1=golden)
    assert out.code != 0
    failed = [c["name"] for c in out.report["checks"] if not c["passed"]]
    assert failed == ["table1"]


@pytest.mark.slow
def test_verify_with_mc(capsys):
    code, out, _ = run(["mc-verify"], capsys)
    report = json.loads(out)
    assert code == 0, [c for c in report["checks"] if not c["passed"]]
    assert any(c["name"].startswith("mc_") for c in report["checks"])
    assert report["mc"]["seed"] == 12345


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gmwbhit", "laplace", "--law", "tau", "--grid", "0:1:2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    lines = res.stdout.splitlines()
    assert lines[0] == "s,laplace"
    assert math.isclose(float(lines[1].split(",")[1]), prob_finite_tau(1.0, 0.5), rel_tol=1e-12)
