import json
from importlib import resources

import pytest

from liocell.cli import EXIT_FOUND, EXIT_HALT, EXIT_OK, EXIT_USAGE, main


def program(name):
    return str(resources.files("liocell.programs") / name)


@pytest.fixture
def cli(capsys):
    def call(*argv):
        code = main([str(a) for a in argv])
        out = capsys.readouterr()
        return code, out.out, out.err

    return call


def test_run_permissiveness(cli):
    code, out, _ = cli("run", program("permissiveness.lio"))
    assert code == EXIT_OK
    assert out.splitlines()[0] == "Value (unit) lcur=H"


def test_run_json_schema(cli):
    code, out, _ = cli("run", program("permissiveness.lio"), "--json")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert {"outcome", "lcur", "value", "steps", "mu_fi", "mu_fs"} <= set(doc)
    assert doc["mu_fs"] == [{"addr": "fs:0", "label": "L", "inner_label": "H", "value": "(unit)"}]


def test_split_write_check_halts(cli):
    code, out, _ = cli("run", program("permissiveness.lio"), "--split-write-check")
    assert code == EXIT_HALT
    assert out.startswith("Diverged lcur=H")


def test_trace_lines(cli):
    code, out, _ = cli("trace", program("permissiveness.lio"))
    assert code == EXIT_OK
    lines = out.splitlines()
    assert any("writeRef-FS" in ln for ln in lines)
    assert lines[-1].startswith("Value")


def test_args_are_applied(cli, tmp_path):
    f = tmp_path / "read.lio"
    f.write_text("(lam r (readRef fs r))\n")
    code, out, _ = cli("run", f, "--arg", "fs:L:L:true")
    assert code == EXIT_OK and out.startswith("Value (bool true) lcur=L")
    code, _, err = cli("run", f, "--arg", "fs:L:Q:true")
    assert code == EXIT_USAGE and "error" in err


def test_typecheck(cli, tmp_path):
    code, out, _ = cli("typecheck", program("permissiveness.lio"))
    assert code == EXIT_OK and out.strip() == "LIO ()"
    f = tmp_path / "bad.lio"
    f.write_text("(if (unit) true false)\n")
    code, _, err = cli("typecheck", f)
    assert code == EXIT_USAGE and err


def test_input_errors(cli, tmp_path):
    assert cli("run", tmp_path / "missing.lio")[0] == EXIT_USAGE
    f = tmp_path / "open.lio"
    f.write_text("(do (x <- \n")
    code, _, err = cli("run", f)
    assert code == EXIT_USAGE and "unclosed" in err
    assert cli("run", program("permissiveness.lio"), "--mode", "naive", "--calculus", "fi")[0] == EXIT_USAGE
    assert cli("frobnicate")[0] == EXIT_USAGE


def test_embed(cli, tmp_path):
    f = tmp_path / "cell.lio"
    f.write_text("(do (r <- (newRef fs L true)) (readRef fs r))\n")
    code, out, _ = cli("embed", f)
    assert code == EXIT_OK
    term, rest = out.split("\n", 1)
    assert "fs" not in term.split() and "WrapRef" in term
    assert json.loads(rest) == {"lcur": "L", "mu_fi": []}


def test_attacks_naive_all_leak(cli):
    code, out, _ = cli("attacks", "--mode", "naive")
    assert code == EXIT_FOUND
    lines = out.splitlines()
    assert len(lines) == 4 and all(" LEAK " in ln for ln in lines)


def test_attacks_default_reports_both(cli):
    code, out, _ = cli("attacks")
    assert code == EXIT_OK
    assert out.count(" LEAK ") == 4 and out.count(" blocked ") == 8


def test_attacks_json(cli):
    code, out, _ = cli("attacks", "--mode", "secure", "--json")
    doc = json.loads(out)
    assert code == EXIT_OK and len(doc) == 8
    assert all(r["blocked"] and not r["leaked"] for r in doc)


def test_compare_table(cli):
    code, out, _ = cli("compare", program("upgrade-policies.imp"))
    assert code == EXIT_OK
    rows = {ln.split()[0]: ln for ln in out.splitlines()[2:]}
    assert "Accept [1]" in rows["scoped-upgrade"]
    assert rows["branch-on-upgraded"].split()[1:] == ["Reject", "Reject", "Reject", "Accept", "[]"]


def test_compare_json(cli):
    code, out, _ = cli("compare", program("upgrade-policies.imp"), "--json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert len(doc) == 4


def test_check_ni_secure_passes(cli):
    code, out, _ = cli("check-ni", "--variant", "fs-au", "--trials", 40, "--templates")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["counterexamples"] == 0 and doc["property"] == "TINI"
    assert doc["pass"] + doc["inconclusive"] == 40


def test_check_ni_naive_reports_counterexample(cli):
    code, out, _ = cli("check-ni", "--mode", "naive", "--trials", 60, "--templates", "--max-examples", 1)
    doc = json.loads(out)
    assert code == EXIT_FOUND and doc["counterexamples"] > 0
    ex = doc["examples"][0]
    assert {"seed", "reason", "program", "args1", "args2", "store1", "store2"} <= set(ex)


def test_check_ni_concurrent(cli):
    code, out, _ = cli("check-ni", "--variant", "fs-au", "--concurrent", "--trials", 15)
    assert code == EXIT_OK and json.loads(out)["property"] == "TSNI"
    assert cli("check-ni", "--variant", "fi", "--concurrent", "--trials", 1)[0] == EXIT_USAGE
