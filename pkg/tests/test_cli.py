"""Command-line interface: exit codes, outputs, determinism."""

import json
import subprocess
import sys

import pytest

from hjfield.cli import run


def test_parse_builtin(capsys):
    assert run(["parse", "--model", "pontryagin"]) == 0
    assert "8 fields" in capsys.readouterr().out


def test_unknown_model_exits_2(capsys):
    assert run(["analyze", "--model", "nosuch"]) == 2
    assert "unknown model" in capsys.readouterr().err


def test_missing_subcommand_exits_2(capsys):
    assert run([]) == 2


def test_bad_model_file_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.hj"
    bad.write_text("field q slots=(internal role=dynamical momentum=p\n")
    assert run(["parse", "--model", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_parse_model_file(tmp_path, capsys):
    f = tmp_path / "toy.hj"
    f.write_text("""
field q slots=(internal) role=dynamical momentum=p
bracket {q[i], p[j]} = delta(i,j) D3(x,y)
hamiltonian phi1 free=(i) = p[i] primary
hamiltonian H0 = 1/2 p[i] p[i] canonical
""")
    assert run(["parse", "--model", str(f)]) == 0
    assert "toy" in capsys.readouterr().out


def test_brackets_subcommand(tmp_path):
    out = tmp_path / "b.txt"
    assert run(["brackets", "--model", "euler", "-o", str(out)]) == 0
    text = out.read_text()
    assert "Generalized brackets" in text
    assert "-Xi/Omega" in text


def test_analyze_writes_file_and_is_deterministic(tmp_path):
    o1, o2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert run(["analyze", "--model", "pontryagin", "--emit", "structured",
                "-o", str(o1)]) == 0
    assert run(["analyze", "--model", "pontryagin", "--emit", "structured",
                "-o", str(o2)]) == 0
    assert o1.read_bytes() == o2.read_bytes()
    data = json.loads(o1.read_text())
    assert data["dof"]["dof"] == 0


def test_analyze_latex_with_reducibility_check(tmp_path):
    out = tmp_path / "euler.tex"
    assert run(["analyze", "--model", "euler", "--check-reducibility",
                "--emit", "latex", "-o", str(out)]) == 0
    assert out.read_text().startswith("\\documentclass")


def test_validate_subcommand(tmp_path):
    out = tmp_path / "v.txt"
    assert run(["validate", "--model", "pontryagin", "--oracle-trials", "3",
                "--seed", "5", "-o", str(out)]) == 0
    assert "PASS" in out.read_text()


def test_validate_deterministic_given_seed(tmp_path):
    o1, o2 = tmp_path / "v1.txt", tmp_path / "v2.txt"
    run(["validate", "--model", "euler", "--oracle-trials", "2",
         "--seed", "9", "-o", str(o1)])
    run(["validate", "--model", "euler", "--oracle-trials", "2",
         "--seed", "9", "-o", str(o2)])
    assert o1.read_bytes() == o2.read_bytes()


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "hjfield.cli", "parse", "--model", "euler"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "euler" in proc.stdout
