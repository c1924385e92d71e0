import pytest
from hypothesis import given, settings, strategies as st

from liocell.harness.generator import gen_program
from liocell.lattice import H, L, PU_THREE_POINT
from liocell.machine import make_state
from liocell.syntax import ParseError, TypeCheckError, parse_program, pretty, typecheck_config
from liocell.syntax.terms import (
    DIVERGE,
    FALSE,
    TRUE,
    UNIT,
    App,
    Bind,
    BoolLit,
    If,
    LabelLit,
    LabelOf,
    LabelOp,
    Lam,
    Lb,
    Return,
    Var,
    alpha_equiv,
    alpha_normalize,
    do,
    fold_pure,
    free_vars,
    size,
    subst,
)


def test_parse_basic_forms():
    t = parse_program("(bind (return (bool true)) (lam x (return x)))")
    assert t == Bind(Return(TRUE), Lam("x", Return(Var("x"))))
    assert parse_program("(lop join L H)") == LabelOp("join", LabelLit(L), LabelLit(H))


def test_do_block_desugars_to_binds():
    t = parse_program("(do (x <- (return (unit))) (return x))")
    assert t == Bind(Return(UNIT), Lam("x", Return(Var("x"))))
    assert parse_program("(do (return (unit)) (return (unit)))") == Bind(Return(UNIT), Lam("_", Return(UNIT)))


def test_multi_parameter_lambda_curries():
    assert parse_program("(lam (a b) a)") == Lam("a", Lam("b", Var("a")))


@pytest.mark.parametrize(
    "src, msg",
    [
        ("(lam x", "unclosed"),
        ("(frob 1)", "unknown form"),
        ("(if (bool true) (unit))", "expects 3"),
        ("#(Lb H (unit))", "TCB"),
        ("(do (x <- (return (unit))))", "must end"),
        ("(newRef xx L (unit))", "flavor"),
    ],
)
def test_parse_errors_carry_positions(src, msg):
    with pytest.raises(ParseError, match=msg) as e:
        parse_program(src)
    assert "line" in str(e.value) or e.value.args


def test_labels_follow_the_selected_lattice():
    t = parse_program("(label P (unit))", PU_THREE_POINT)
    assert t.lbl == LabelLit(PU_THREE_POINT.label("P"))
    # outside that lattice P is just a variable name
    assert parse_program("(label P (unit))").lbl == Var("P")


@settings(max_examples=200)
@given(st.integers(0, 10**6), st.sampled_from(["base", "fi", "fs", "fs-au"]))
def test_pretty_parse_round_trip(seed, variant):
    g = gen_program(seed, 5, variant)
    for t in (g.term, g.term2):
        assert parse_program(pretty(t), allow_tcb=True) == t


@settings(max_examples=200)
@given(st.integers(0, 10**6), st.sampled_from(["base", "fi", "fs"]))
def test_generated_programs_typecheck(seed, variant):
    g = gen_program(seed, 5, variant)
    assert str(typecheck_config(g.s1, g.term)) == "LIO Bool"
    assert str(typecheck_config(g.s2, g.term2)) == "LIO Bool"


def test_alpha_normalization():
    a = Lam("x", Lam("y", Var("x")))
    b = Lam("p", Lam("q", Var("p")))
    assert alpha_equiv(a, b)
    assert not alpha_equiv(a, Lam("p", Lam("q", Var("q"))))
    assert alpha_normalize(alpha_normalize(a)) == alpha_normalize(a)


def test_substitution_avoids_capture():
    t = Lam("y", App(Var("x"), Var("y")))
    out = subst(t, "x", Var("y"))
    assert free_vars(out) == frozenset({"y"})
    assert isinstance(out, Lam) and out.var != "y"


def test_fold_pure_evaluates_label_expressions():
    t = If(LabelOp("flows", LabelOp("join", LabelLit(L), LabelLit(H)), LabelLit(L)), TRUE, FALSE)
    assert fold_pure(t) == FALSE
    assert fold_pure(LabelOf(Lb(H, UNIT))) == LabelLit(H)
    # beta redexes are left alone
    beta = App(Lam("x", Var("x")), TRUE)
    assert fold_pure(beta) == beta


def test_size_counts_nodes():
    assert size(TRUE) == 1
    assert size(do(("x", Return(TRUE)), Return(Var("x")))) == 6


class TestTypes:
    def check(self, src, fi=None, fs=None):
        return str(typecheck_config(make_state(L, fi, fs), parse_program(src, allow_tcb=True)))

    def test_computations(self):
        assert self.check("(return (bool true))") == "LIO Bool"
        assert self.check("(label H (unit))") == "LIO (Labeled ())"
        assert self.check("(getLabel)") == "LIO Label"

    def test_references(self):
        assert self.check("(newRef fi L (bool true))") == "LIO (Ref_fi Bool)"
        assert self.check("(newRef fs L (unit))") == "LIO (Ref_fs ())"
        assert self.check("(readRef fs #(Ref fs 0))", fs={0: Lb(L, Lb(H, TRUE))}) == "LIO Bool"

    def test_mismatches(self):
        with pytest.raises(TypeCheckError):
            self.check("(if (unit) (return (unit)) (return (unit)))")
        with pytest.raises(TypeCheckError):
            self.check("(readRef fi (newRef fi L (unit)))")
        with pytest.raises(TypeCheckError, match="unbound"):
            self.check("(return z)")

    def test_flavors_do_not_mix(self):
        with pytest.raises(TypeCheckError, match="flavor"):
            self.check("(bind (newRef fs L (unit)) (lam r (readRef fi r)))")

    def test_withrefs_hides_cells_outside_the_bag(self):
        fs = {0: Lb(L, Lb(L, TRUE)), 1: Lb(L, Lb(L, TRUE))}
        assert self.check("(withRefs (bag #(Ref fs 0)) (readRef fs #(Ref fs 0)))", fs=fs) == "LIO Bool"
        with pytest.raises(TypeCheckError, match="outside"):
            self.check("(withRefs (bag #(Ref fs 0)) (bind (readRef fs #(Ref fs 1)) (lam _ (return (unit)))))", fs=fs)
