import itertools

import pytest
from hypothesis import given, settings, strategies as st

from liocell.harness.generator import gen_program
from liocell.lattice import H, L
from liocell.machine import (
    Configuration,
    Diverged,
    Engine,
    FuelExhausted,
    MonitorError,
    Next,
    Terminal,
    Value,
    VariantConfig,
    describe,
    make_state,
    run,
    trace,
)
from liocell.programs import program_source
from liocell.syntax import parse_program, typecheck_config
from liocell.syntax.terms import TRUE, UNIT, Lb, LabelLit, RefFS, WriteRef, FS


def go(src, calc="fs", sec="secure", lcur=L, fi=None, fs=None, fuel=2000, **kw):
    st = make_state(lcur, fi, fs, VariantConfig(calc, sec, **kw))
    return run(Configuration(st, parse_program(src, allow_tcb=True)), fuel=fuel)


# -- the permissiveness example ------------------------------------------------------------


def test_permissiveness_program_succeeds_at_h():
    out = go(program_source("permissiveness.lio"))
    assert isinstance(out, Value) and out.value == UNIT and out.state.lcur == H


def test_permissiveness_program_fails_under_split_check():
    out = go(program_source("permissiveness.lio"), split_write_check=True)
    assert isinstance(out, Diverged) and out.state.lcur == H


@pytest.mark.parametrize("lcur, lo, ld", list(itertools.product([L, H], repeat=3)))
def test_fs_write_check_is_the_join_condition(lcur, lo, ld):
    cell = {0: Lb(lo, Lb(ld, TRUE))}
    joint = go("(writeRef fs #(Ref fs 0) (bool false))", lcur=lcur, fs=cell)
    split = go("(writeRef fs #(Ref fs 0) (bool false))", lcur=lcur, fs=cell, split_write_check=True)
    assert isinstance(joint, Value) == (lcur <= (lo | ld))
    assert isinstance(split, Value) == (lcur <= lo and lcur <= ld)
    # the split check never accepts a write that the joint check rejects
    assert not (isinstance(split, Value) and not isinstance(joint, Value))


# -- outcomes --------------------------------------------------------------------------------


def test_label_check_failures_name_the_rule():
    out = go("(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (label L (unit))))))")
    assert isinstance(out, MonitorError) and (out.error, out.rule) == ("LabelCheck", "label")
    out = go("(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (newRef fi L (unit))))))")
    assert (out.error, out.rule) == ("LabelCheck", "newRef-FI")


def test_failed_fs_write_taints_then_diverges():
    out = go(
        "(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (writeRef fs #(Ref fs 0) (bool false))))))",
        fs={0: Lb(L, Lb(L, TRUE))},
    )
    assert isinstance(out, Diverged) and out.state.lcur == H
    assert out.state.mu_fs[0] == Lb(L, Lb(L, TRUE))


def test_naive_write_relabels_to_current_label():
    out = go(
        "(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (writeRef fs #(Ref fs 0) (bool false))))))",
        sec="naive",
        fs={0: Lb(L, Lb(L, TRUE))},
    )
    assert isinstance(out, Value)
    assert out.state.mu_fs[0].body.label == H


def test_calculus_restrictions_are_stuck_redexes():
    for src, calc in [("(newRef fs L (unit))", "fi"), ("(newRef fi L (unit))", "base"), ("(fork (return (unit)))", "fs")]:
        out = go(src, calc)
        assert isinstance(out, MonitorError) and out.error == "StuckRedex"
    out = go("(toLabeled H (return (unit)))", concurrent=True)
    assert out.error == "StuckRedex" and out.rule == "toLabeled"


def test_non_functions_and_dangling_addresses_are_stuck():
    assert go("(app (bool true) (unit))").error == "StuckRedex"
    assert go("(readRef fs #(Ref fs 7))").error == "StuckRedex"


def test_fuel_exhaustion():
    out = go("(app (fix (lam f (lam x (app f x)))) (unit))", fuel=300)
    assert isinstance(out, FuelExhausted) and out.steps == 300
    assert "FuelExhausted after 300 steps" in describe(out)


def test_tolabeled_restores_the_current_label():
    out = go("(bind (toLabeled H (bind (label H (unit)) (lam v (unlabel v)))) (lam x (getLabel)))")
    assert out.value == LabelLit(L) and out.state.lcur == L


def test_tolabeled_below_inner_label_fails():
    out = go("(toLabeled L (bind (label H (unit)) (lam v (unlabel v))))")
    assert (out.error, out.rule) == ("LabelCheck", "toLabeled")


def test_auto_upgrade_raises_every_reachable_cell():
    fs = {0: Lb(L, Lb(L, TRUE)), 1: Lb(L, Lb(L, TRUE))}
    out = go("(bind (label H (unit)) (lam v (unlabel v)))", "fs-au", fs=fs)
    assert out.state.lcur == H
    assert all(c.body.label == H for c in out.state.mu_fs.values())


def test_withrefs_limits_auto_upgrade_to_the_bag():
    fs = {0: Lb(L, Lb(L, TRUE)), 1: Lb(L, Lb(L, TRUE))}
    src = "(withRefs (bag #(Ref fs 0)) (bind (label H (unit)) (lam v (unlabel v))))"
    out = go(src, "fs-au", fs=fs)
    assert isinstance(out, Value)
    assert out.state.mu_fs[0].body.label == H and out.state.mu_fs[1].body.label == L


def test_withrefs_scope_violation_is_recorded():
    fs = {0: Lb(L, Lb(L, TRUE)), 1: Lb(L, Lb(L, TRUE))}
    mode = VariantConfig("fs")
    eng = Engine(mode, fuel=100)
    t = parse_program("(withRefs (bag #(Ref fs 0)) (readRef fs #(Ref fs 1)))", allow_tcb=True)
    res = eng.step(Configuration(make_state(L, None, fs, mode), t))
    assert isinstance(res, Terminal) and res.rule == "withRefs-Ctx[readRef-FS]"
    out = res.outcome
    assert isinstance(out, MonitorError) and (out.error, out.rule) == ("StuckRedex", "readRef-FS")
    assert eng.scope_violations


def test_upgrade_and_downgrade():
    fs = {0: Lb(L, Lb(L, TRUE))}
    out = go("(bind (upgrade #(Ref fs 0) H) (lam _ (labelOfRef fs #(Ref fs 0))))", fs=fs)
    assert out.value == LabelLit(H) and out.state.lcur == L
    out = go("(bind (downgrade #(Ref fs 0) L) (lam _ (readRef fs #(Ref fs 0))))", fs={0: Lb(L, Lb(H, TRUE))})
    assert isinstance(out, Value) and out.state.lcur == L  # value is destroyed
    assert not isinstance(out.value, type(TRUE))


def test_step_is_deterministic():
    g = gen_program(3, 6, "fs")
    c = Configuration(g.s1, g.term)
    for _ in range(20):
        # fresh engines: the step counter is per engine
        a, b = Engine(VariantConfig("fs")).step(c), Engine(VariantConfig("fs")).step(c)
        assert a == b
        if not isinstance(a, Next):
            break
        c = a.cfg


def test_trace_lines_have_the_fixed_format():
    lines, out = trace(Configuration(make_state(), parse_program("(bind (return (unit)) (lam x (return x)))")))
    assert lines[0].startswith("step=1 rule=return lcur=L term=")
    assert all(l.count(" ") >= 3 for l in lines)


# -- invariants over random programs ---------------------------------------------------------


def _walk(g, mode, limit=400):
    """All configurations reached by the top-level run."""
    eng = Engine(mode, fuel=limit)
    c = Configuration(g.s1, g.term)
    seen = [c]
    for _ in range(limit):
        r = eng.step(c)
        if not isinstance(r, Next):
            return seen, r
        c = r.cfg
        seen.append(c)
    return seen, None


@settings(max_examples=150)
@given(st.integers(0, 10**6), st.sampled_from(["fi", "fs", "fs-au"]))
def test_current_label_only_rises(seed, calc):
    g = gen_program(seed, 5, calc)
    seen, _ = _walk(g, VariantConfig(calc))
    for a, b in zip(seen, seen[1:]):
        assert a.state.lcur <= b.state.lcur


@settings(max_examples=100)
@given(st.integers(0, 10**6), st.sampled_from(["fi", "fs", "fs-au"]))
def test_types_are_preserved(seed, calc):
    g = gen_program(seed, 4, calc, high_outer=False)
    seen, _ = _walk(g, VariantConfig(calc), limit=200)
    want = str(typecheck_config(seen[0].state, seen[0].term))
    for c in seen:
        assert str(typecheck_config(c.state, c.term)) == want


@settings(max_examples=150)
@given(st.integers(0, 10**6), st.sampled_from(["fs", "fs-au"]))
def test_label_on_label_stays_below_data_label(seed, calc):
    g = gen_program(seed, 5, calc, cosim=True)
    seen, _ = _walk(g, VariantConfig(calc))
    for c in seen:
        for cell in c.state.mu_fs.values():
            assert cell.label <= cell.body.label
        assert all(a < c.state.next_addr for a in [*c.state.mu_fi, *c.state.mu_fs])
