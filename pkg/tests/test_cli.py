import json
import os
import subprocess
import sys

import pytest

from kdvcarleman.cli import main
from kdvcarleman.sysfile import parse_system

ROOT = os.path.dirname(os.path.dirname(__file__))
SYSTEMS = os.path.join(ROOT, "systems")
CONFIGS = os.path.join(ROOT, "configs")


def run(*argv):
    return main(list(argv))


def test_check_catalog_passes(capsys):
    assert run("check", "--catalog", "heisenberg1") == 0
    out = capsys.readouterr().out
    assert "verified-exact" in out and "PASS" in out


def test_check_bad_involutive_file(capsys):
    assert run("check", "--file", os.path.join(SYSTEMS, "bad_involutive.sys")) == 1
    assert "witness" in capsys.readouterr().out


def test_check_degenerate_kdv(capsys, tmp_path):
    path = tmp_path / "c.json"
    assert run("check", "--catalog", "kdv", "--box", "includes-zero", "--field", "a=x", "--json", str(path)) == 1
    assert "degenerate" in capsys.readouterr().out
    rep = json.load(open(path))
    assert rep["report"]["nondegenerate"]["nondegenerate"] is False


def test_check_require_rank(capsys):
    assert run("check", "--catalog", "heisenberg1-space", "--require-rank", "1") == 0
    assert run("check", "--catalog", "heisenberg1-space", "--require-rank", "2") == 1


def test_verify_heisenberg_time_weight(capsys):
    assert run("verify", "--catalog", "heisenberg1", "--weight", "-t") == 0
    assert "4/4 exact-match" in capsys.readouterr().out


def test_verify_heisenberg_space_weight_reports_residual(capsys):
    assert run("verify", "--catalog", "heisenberg1", "--weight", "-x1") == 1
    out = capsys.readouterr().out
    assert "weight f = -x1" in out and "[residual] conjugation" in out


def test_verify_report_only(capsys, tmp_path):
    assert run("verify", "--catalog", "kdv", "--a", "1+x^2", "--report-only", "--out", str(tmp_path)) == 0
    out = capsys.readouterr().out
    assert "[residual]" in out and "(report-only)" in out
    recs = json.load(open(tmp_path / "identities.json"))
    assert recs["config"]["report_only"] is True
    assert (tmp_path / "identities.txt").read_text() in out


def test_verify_missing_structure(capsys):
    assert run("verify", "--file", os.path.join(SYSTEMS, "missing_c.sys"), "--weight", "-x2") == 2
    assert "structure coefficients required" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["verify", "--catalog", "kdv", "--weight", "-q"],
    ["verify", "--catalog", "kdv", "--weight", "i*x"],
    ["check", "--catalog", "nope"],
    ["check", "--catalog", "zk", "--a", "1"],
    ["sweep", "--catalog", "kdv", "--lambdas", "0.5,1,2"],
    ["sweep", "--catalog", "kdv", "--shape", "4"],
    ["sweep"],
    ["catalog", "show"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(*argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        run("frobnicate")
    assert err.value.code == 2


def test_bad_file_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.sys"
    p.write_text("dim: 2\nN: 1\nX1: 0, 1 +* 2\n")
    assert run("check", "--file", str(p)) == 2
    assert f"{p}:3:11:" in capsys.readouterr().err


def test_sweep_outputs_and_determinism(tmp_path, capsys):
    args = ["sweep", "--catalog", "kdv", "--shape", "64", "--count", "8"]
    assert run(*args, "--out", str(tmp_path / "a")) == 0
    assert run(*args, "--out", str(tmp_path / "b")) == 0
    for name in ("sweep.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.load(open(tmp_path / "a" / "summary.json"))
    assert summary["checks"]["passed"] is True


def test_sweep_failure_exit_1(capsys):
    assert run("sweep", "--catalog", "kdv", "--shape", "64", "--count", "4", "--min-slope", "50") == 1
    assert "FAIL" in capsys.readouterr().out


def test_sweep_hypothesis_failure_exit_1(capsys):
    assert run("sweep", "--catalog", "kdv", "--a", "x", "--shape", "64", "--count", "2") == 1
    assert "hypothesis failure" in capsys.readouterr().err


def test_sweep_config_file(tmp_path, capsys):
    assert run("sweep", os.path.join(CONFIGS, "heisenberg1.ini"), "--count", "6", "--out", str(tmp_path)) == 0
    summary = json.load(open(tmp_path / "summary.json"))
    assert summary["config"]["weight"] == "-x1"
    assert summary["config"]["axes"] == ["t", "x1", "x2", "x3"]


def test_solvability(tmp_path, capsys):
    path = tmp_path / "s.json"
    assert run("solvability", "--catalog", "kdv", "--count", "5", "--json", str(path)) == 0
    rep = json.load(open(path))
    assert rep["result"]["inf_ratio"] > 0 and rep["passed"] is True


def test_catalog_list_and_show(capsys):
    assert run("catalog", "list") == 0
    assert "heisenberg1-embedded" in capsys.readouterr().out
    assert run("catalog", "show", "zk") == 0
    text = capsys.readouterr().out
    assert parse_system(text).system.N == 2


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "kdvcarleman.cli", "catalog", "list"],
                         capture_output=True, text=True, check=True)
    assert "kdv-var" in out.stdout
