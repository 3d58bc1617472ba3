import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from sicta import __version__
from sicta.cli import main, run_cli

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize(
    "argv, golden",
    [
        (["validate", "--dist", "1/2,1/2", "--nmax", "6"], "validate_fair2.csv"),
        (["closed", "--dist", "fair:3", "--nmax", "6"], "closed_fair3.csv"),
        (["exact", "--dist", "pbi:3", "--n", "3", "--jmax", "8"], "exact_law_pbi3_n3.csv"),
        (["exact", "--dist", "1/5,3/10,1/2", "--nmax", "5"], "exact_means_skew.csv"),
    ],
)
def test_golden_outputs(capsys, argv, golden):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert out == (GOLDEN / golden).read_text()


def test_validate_all_zero(capsys):
    code, out, err = run(capsys, "validate", "--dist", "1/2,1/2", "--nmax", "10")
    assert code == 0
    table = rows(out)
    assert [int(r["n"]) for r in table] == list(range(1, 11))
    assert all(r[f"{o}_abs_diff"] == "0" for r in table for o in "LCSI")
    assert json.loads(err) == {"mismatches": [], "count": 0}


def test_validate_printed_formulas(capsys):
    code, out, err = run(capsys, "validate", "--dist", "1/2,1/2", "--nmax", "2", "--paper-literal")
    assert code == 1
    assert json.loads(err)["mismatches"] == ["S@2", "I@2"]
    row = rows(out)[1]
    assert (row["S_oracle"], row["S_closed"]) == ("1", "0")
    assert (row["I_oracle"], row["I_closed"]) == ("1/2", "7/2")


def test_validate_float_distribution(capsys):
    code, _, err = run(capsys, "validate", "--dist", "0.3,0.7", "--nmax", "6")
    assert code == 0 and json.loads(err)["count"] == 0


def test_closed_single_observable(capsys):
    code, out, _ = run(capsys, "closed", "--dist", "fair:2", "--obs", "L", "--n", "0:4")
    assert code == 0
    assert [r["value_exact"] for r in rows(out)] == ["1", "1", "3", "13/3", "121/21"]
    code, out, _ = run(capsys, "closed", "--dist", "fair:2", "--obs", "C", "--n", "500", "--mode", "high-precision")
    r = rows(out)[0]
    assert r["value_exact"] == "" and float(r["value"]) > 0


def test_asymptotic_leading(capsys):
    code, out, _ = run(capsys, "asymptotic", "--dist", "pbi:3", "--obs", "L")
    assert code == 0
    (r,) = rows(out)
    assert list(r) == ["observable", "leading", "n", "g_n", "tail_bound"]
    assert float(r["leading"]) == pytest.approx(1 / math.log(2), rel=1e-14)
    assert r["n"] == ""


def test_asymptotic_oscillation(capsys):
    code, out, _ = run(capsys, "asymptotic", "--dist", "0.3,0.7", "--obs", "all", "--n", "256,1024", "--mmax", "4")
    table = rows(out)
    assert len(table) == 8
    assert all(float(r["g_n"]) == 0.0 for r in table)
    _, out, _ = run(capsys, "asymptotic", "--dist", "pbi:2", "--n", "1024")
    assert 1e-6 < float(rows(out)[0]["g_n"]) < 1e-3


def test_simulate_is_seeded(capsys, tmp_path):
    argv = ["simulate", "--dist", "pbi:3", "--n", "20", "--runs", "500", "--seed", "4"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv, "--threads", "3")
    assert a == b
    data = json.loads(a)
    assert {"means", "standard_errors", "histogram"} <= set(data)
    assert sum(data["histogram"].values()) == 500
    hist = tmp_path / "h.csv"
    run(capsys, *argv, "--histogram-csv", str(hist))
    assert hist.read_text().startswith("length,count\n")
    assert json.loads((tmp_path / "h.csv.manifest.json").read_text())["seed"] == 4


def test_simulate_gated(capsys):
    code, out, _ = run(capsys, "simulate-gated", "--dist", "fair:2", "--lambda", "0.3", "--cris", "2000", "--warmup", "100")
    data = json.loads(out)
    assert code == 0 and data["cris"] == 2000
    assert {"cri_length", "delay_total", "delay_wait", "delay_resolution"} <= set(data["means"])
    assert sum(data["histogram"].values()) == pytest.approx(1.0)


def test_overload_exit(capsys):
    code, _, err = run(capsys, "simulate-gated", "--dist", "fair:2", "--lambda", "0.75", "--cris", "9000")
    assert code == 1
    assert json.loads(err)["error"] == "UnstableSystem"


def test_optimize(capsys):
    code, out, _ = run(capsys, "optimize", "--d", "3")
    data = json.loads(out)
    assert data["argmin"] == pytest.approx([0.5, 0.25, 0.25], abs=1e-6)
    assert data["value"] == pytest.approx(1 / math.log(2), abs=1e-10)
    assert data["lagrange_conditions"] is True


def test_tradeoff(capsys):
    code, out, _ = run(capsys, "tradeoff", "--d", "2", "--grid", "5")
    table = rows(out)
    assert list(table[0]) == ["x", "collision_rate", "p_1", "p_2"]
    assert [float(r["x"]) for r in table] == pytest.approx([0, 0.05, 0.1, 0.15, 0.2])
    assert float(table[-1]["collision_rate"]) == pytest.approx(0.44, abs=0.02)


def test_delay_with_manifest(capsys, tmp_path):
    out_path = tmp_path / "delay.json"
    pi_path = tmp_path / "pi.csv"
    code, out, _ = run(capsys, "delay", "--dist", "fair:2", "--lambda", "0.5", "--out", str(out_path), "--pi-csv", str(pi_path))
    assert code == 0 and out == ""
    data = json.loads(out_path.read_text())
    assert set(data) >= {"mst", "stationary_mean_cri", "mean_total_delay", "truncation_report"}
    assert data["mean_total_delay"] == pytest.approx(4.67158, abs=1e-4)
    manifest = json.loads((tmp_path / "delay.json.manifest.json").read_text())
    assert manifest["subcommand"] == "delay"
    assert manifest["version"] == __version__
    assert manifest["parameters"]["dist"] == "1/2,1/2"
    assert manifest["parameters"]["lam"] == 0.5
    assert manifest["output"] == str(out_path)
    assert manifest["duration_s"] >= 0
    assert pi_path.read_text().startswith("length,pi,pi_tagged\n")


def test_not_stationary_exit(capsys):
    code, _, err = run(capsys, "delay", "--dist", "fair:2", "--lambda", "0.75")
    assert code == 1 and json.loads(err)["error"] == "NotStationary"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["nonsense"],
        ["closed", "--dist", "1/2,0.6"],
        ["closed"],
        ["closed", "--dist", "fair:2", "--n", "a:b"],
        ["optimize"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "UsageError"


def test_run_cli_raises_system_exit_on_usage():
    with pytest.raises(SystemExit) as info:
        run_cli(["closed"])
    assert info.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sicta", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
