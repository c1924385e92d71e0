import pytest
from hypothesis import given, settings, strategies as st

from liocell.concurrent import (
    Scheduler,
    check_scope_invariant,
    concurrent_mode,
    delay,
    initial_sched,
    run_concurrent,
)
from liocell.harness.generator import gen_program
from liocell.lattice import H, L
from liocell.machine import VariantConfig
from liocell.syntax import parse_program
from liocell.syntax.terms import FALSE, TRUE, UNIT, Bag, Lb, RefFS, WithRefs


def p(src):
    return parse_program(src, allow_tcb=True)


def test_round_robin_order():
    s = initial_sched([p("(seq (return (unit)) (return (bool true)))"), p("(return (bool false))")])
    out = run_concurrent(s)
    tids = [ev.tid for ev in out.trace]
    assert tids[:3] == [1, 2, 1]
    assert [r.tid for r in out.state.finished] == [2, 1]
    assert out.result(1).value == TRUE and out.result(2).value == FALSE


def test_fork_appends_parent_then_child():
    out = run_concurrent(initial_sched([p("(do (fork (return (bool true))) (return (bool false)))")]))
    first = out.trace[0]
    assert first.rule == "T-fork" and first.inner == "withRefs-Ctx[forkLIO]"
    assert out.result(2).value == TRUE
    assert [ev.rule for ev in out.trace].count("T-done") == 2


def test_stuck_thread_does_not_stop_others():
    fs = {0: Lb(L, Lb(L, TRUE))}
    bad = p("(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (label L (unit))))))")
    out = run_concurrent(initial_sched([bad, p("(return (unit))")], None, fs), concurrent_mode("fs"))
    assert out.result(1).status == "MonitorError"
    assert out.result(2).status == "Value"
    assert [e.tid for e in out.errors] == [1]


def test_failed_write_keeps_the_store_and_kills_the_thread():
    fs = {0: Lb(L, Lb(L, FALSE))}
    t = p("(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (writeRef fs #(Ref fs 0) (bool true))))))")
    out = run_concurrent(initial_sched([t], None, fs), concurrent_mode("fs"))
    assert out.result(1).status == "Diverged"
    assert out.state.mu_fs[0] == Lb(L, Lb(L, FALSE))


def test_auto_upgrade_only_touches_the_thread_bag():
    fs = {0: Lb(L, Lb(L, TRUE)), 1: Lb(L, Lb(L, TRUE))}
    t = p("(bind (label H (unit)) (lam v (unlabel v)))")
    s = initial_sched([t], None, fs, bag=Bag((RefFS(0),)))
    out = run_concurrent(s, concurrent_mode("fs-au"), check_invariant=True)
    assert out.state.mu_fs[0].body.label == H
    assert out.state.mu_fs[1].body.label == L


def test_tolabeled_is_not_available():
    out = run_concurrent(initial_sched([p("(toLabeled H (return (unit)))")]))
    assert out.result(1).status == "MonitorError"
    assert "toLabeled" in out.result(1).reason


def test_nested_withrefs_intersects_bags():
    fs = {0: Lb(L, Lb(L, TRUE)), 1: Lb(L, Lb(L, TRUE))}
    t = WithRefs(Bag((RefFS(1),)), p("(readRef fs #(Ref fs 0))"))
    out = run_concurrent(initial_sched([t], None, fs, bag=Bag((RefFS(0), RefFS(1)))))
    assert out.result(1).status == "MonitorError"
    assert out.scope_violations


def test_fuel():
    loop = p("(app (fix (lam f (lam x (app f x)))) (unit))")
    out = run_concurrent(initial_sched([loop]), fuel=50)
    assert out.status == "FuelExhausted" and out.steps == 50


def test_delay_is_a_run_of_no_ops():
    out = run_concurrent(initial_sched([delay(4)]))
    assert out.result(1).value == UNIT
    # each extra no-op costs return, bind and app
    longer = run_concurrent(initial_sched([delay(5)]))
    assert len(longer.trace) - len(out.trace) == 3


def test_scheduler_requires_fs():
    with pytest.raises(ValueError):
        Scheduler(VariantConfig("fi", concurrent=True))


@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_scope_invariant_holds_on_random_programs(seed):
    g = gen_program(seed, 5, "fs-au", concurrent=True)
    s = initial_sched([(L, g.term)], g.s1.mu_fi, g.s1.mu_fs)
    out = run_concurrent(s, concurrent_mode("fs-au"), fuel=3000, check_invariant=True)
    assert check_scope_invariant(out.state)
