import pytest

from liocell.lattice import TWO_POINT
from liocell.machine import initial_state, VariantConfig
from liocell.policies import (
    ImpError,
    compare_policies,
    desugar_imp,
    format_table,
    input_combinations,
    parse_imp,
    run_lio,
    run_nsu,
    run_pu,
    split_programs,
)
from liocell.programs import program_source
from liocell.syntax.types import typecheck_config

TABLE = {
    "upgrade-first": {"NSU": "Accept []", "PU": "Accept []", "FS": "Accept []", "FS-AU": "Accept []"},
    "branch-on-upgraded": {"NSU": "Reject", "PU": "Reject", "FS": "Reject", "FS-AU": "Accept []"},
    "sweep-upgrades-all": {"NSU": "Reject", "PU": "Accept [1]", "FS": "Reject", "FS-AU": "Reject"},
    "scoped-upgrade": {"NSU": "Reject", "PU": "Accept [1]", "FS": "Reject", "FS-AU": "Accept [1]"},
}


def cell(v):
    return v.label + (" " + v.show_outputs() if v.accepted else "")


@pytest.fixture(scope="module")
def comparison_programs():
    return split_programs(program_source("upgrade-policies.imp"))


def test_split_programs_names(comparison_programs):
    assert [p.name for p in comparison_programs] == list(TABLE)


@pytest.mark.parametrize("name", list(TABLE))
def test_comparison_row(comparison_programs, name):
    prog = next(p for p in comparison_programs if p.name == name)
    row = compare_policies(prog)
    assert {m: cell(row[m]) for m in TABLE[name]} == TABLE[name]


def test_literal_reset_variant_accepts_everywhere_but_nsu_and_fs():
    (prog,) = split_programs(program_source("scoped-upgrade-literal.imp"), "scoped-upgrade-literal")
    row = compare_policies(prog)
    assert cell(row["PU"]) == "Accept []"
    assert cell(row["FS-AU"]) == "Accept []"
    assert not row["NSU"].accepted and not row["FS"].accepted


def test_format_table_layout(comparison_programs):
    rows = [compare_policies(p) for p in comparison_programs]
    text = format_table(rows)
    lines = text.splitlines()
    assert lines[0].split() == ["program", "NSU", "PU", "FS", "FS-AU"]
    assert set(lines[1]) == {"-"}
    assert len(lines) == 2 + len(rows)
    assert lines[3].startswith("branch-on-upgraded")


def test_input_combinations():
    p = parse_imp("input a H\ninput b H\nx := a\n")
    assert len(input_combinations(p)) == 4
    assert input_combinations(parse_imp("x := true\n")) == [{}]


# -- parser -----------------------------------------------------------------------------


def test_parse_shapes():
    p = parse_imp("input h H\nx, y := true  # both\nif h {\n y := false\n} else {\n skip\n}\noutput(y)\n")
    assert [type(s).__name__ for s in p.stmts] == ["Input", "Assign", "IfS", "Output"]
    assert p.stmts[1].names == ("x", "y")
    assert len(p.inputs) == 1


@pytest.mark.parametrize(
    "src, msg",
    [
        ("x := true\nx := $\n", "unexpected"),
        ("x := true\nif x {\n skip\n", None),
        ("x := true\nreset x L x\n", None),
        ("output(z)\n", "before assignment"),
        ("x' := true\n", None),
        ("}\n", "unbalanced"),
    ],
)
def test_parse_errors(src, msg):
    with pytest.raises(ImpError, match=msg):
        p = parse_imp(src)
        run_nsu(p)


def test_parse_error_reports_line():
    with pytest.raises(ImpError) as e:
        parse_imp("x := true\n\ny := @\n")
    assert "3" in str(e.value)


# -- reference monitors -----------------------------------------------------------------


def test_nsu_rejects_sensitive_upgrade():
    p = parse_imp("input h H\nx := false\nif h {\n x := true\n}\n")
    assert run_nsu(p, {"h": False}).accepted  # branch not taken, nothing assigned
    out = run_nsu(p, {"h": True})
    assert not out.accepted and "sensitive upgrade" in out.reason


def test_nsu_allows_assignment_after_upgrade():
    p = parse_imp("input h H\nx := false\nupgrade x H\nif h {\n x := true\n}\n")
    out = run_nsu(p, {"h": True})
    assert out.accepted and dict(out.labels)["x"] == "H"


def test_nsu_label_follows_rhs_at_low_pc():
    p = parse_imp("input h H\nx := h\nx := false\n")
    out = run_nsu(p, {"h": True})
    assert out.accepted and dict(out.labels)["x"] == "L"


def test_pu_marks_partial_leak():
    p = parse_imp("input h H\nx := false\nif h {\n x := true\n}\n")
    out = run_pu(p, {"h": True})
    assert out.accepted and dict(out.labels)["x"] == "P"


def test_pu_rejects_branch_on_partial_leak():
    p = parse_imp("input h H\nx := false\nif h {\n x := true\n}\nif x {\n skip\n}\n")
    out = run_pu(p, {"h": True})
    assert not out.accepted and "P" in out.reason


def test_output_of_high_is_rejected():
    p = parse_imp("input h H\noutput(h)\n")
    assert not run_nsu(p, {"h": True}).accepted
    assert not run_pu(p, {"h": True}).accepted
    assert not run_lio(p, "fs", {"h": True}).accepted


def test_low_output_is_recorded():
    p = parse_imp("x := true\noutput(x)\noutput(0)\n")
    assert run_nsu(p).outputs == (True, False)
    assert run_lio(p, "fs", {}).outputs == (True, False)
    assert run_lio(p, "fs-au", {}).outputs == (True, False)


# -- desugaring -------------------------------------------------------------------------


def test_desugared_programs_typecheck(comparison_programs):
    mode = VariantConfig("fs")
    for prog in comparison_programs:
        for combo in input_combinations(prog):
            ds = desugar_imp(prog, combo, TWO_POINT)
            assert str(typecheck_config(initial_state(mode), ds.term)).startswith("LIO")


def test_desugar_allocates_inputs_then_outputs():
    p = parse_imp("input h H\nx := true\noutput(x)\n")
    ds = desugar_imp(p, {"h": True})
    assert ds.inputs == ("h",)
    assert ds.output_cells == ((1, 2),)
