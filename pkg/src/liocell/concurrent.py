"""Round-robin scheduler over threads that each run one small step per quantum.

A thread is ``(l_cur, bag, term)``. Every step runs ``withRefs bag term`` in the
sequential engine (with ``toLabeled`` struck out and ``forkLIO`` enabled), so a
thread only ever sees the FS cells reachable from its bag.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .lattice import L, Label
from .machine import (
    Configuration,
    Diverged,
    Engine,
    ForkEvent,
    FuelExhausted,
    MachineState,
    MonitorError,
    Next,
    Terminal,
    VariantConfig,
    addrs,
    addrs_inv,
    addrs_plus,
    default_fuel,
)
from .syntax.terms import Bag, Bottom, Diverge, LIOv, RefFS, Term, WithRefs, is_value


@dataclass(frozen=True)
class Thread:
    tid: int
    lcur: Label
    bag: Bag
    term: Term


@dataclass(frozen=True)
class ThreadResult:
    tid: int
    status: str  # Value | Diverged | MonitorError
    lcur: Label
    value: Optional[Term] = None
    reason: str = ""


@dataclass(frozen=True)
class SchedState:
    mu_fi: Mapping[int, Term]
    mu_fs: Mapping[int, Term]
    queue: Tuple[Thread, ...]
    next_addr: int
    next_tid: int = 1
    finished: Tuple[ThreadResult, ...] = ()


@dataclass(frozen=True)
class SchedEvent:
    n: int
    tid: int
    rule: str
    lcur: Label
    inner: str = ""

    def line(self) -> str:
        return f"step={self.n} tid={self.tid} rule={self.rule} lcur={self.lcur}"


@dataclass(frozen=True)
class ConcOutcome:
    status: str  # Done | FuelExhausted
    state: SchedState
    trace: Tuple[SchedEvent, ...]
    steps: int
    scope_violations: Tuple[str, ...] = ()

    def result(self, tid: int = 1) -> Optional[ThreadResult]:
        for r in self.state.finished:
            if r.tid == tid:
                return r
        return None

    @property
    def errors(self) -> List[ThreadResult]:
        return [r for r in self.state.finished if r.status == "MonitorError"]


def concurrent_mode(calculus: str = "fs-au", security: str = "secure") -> VariantConfig:
    return VariantConfig(calculus=calculus, security=security, concurrent=True)


def initial_sched(
    threads: Sequence[Tuple[Label, Term]] | Sequence[Term],
    mu_fi: Optional[Mapping[int, Term]] = None,
    mu_fs: Optional[Mapping[int, Term]] = None,
    bag: Optional[Bag] = None,
) -> SchedState:
    """Initial state; every thread starts with ``bag`` (default: all FS cells)."""
    mu_fi, mu_fs = dict(mu_fi or {}), dict(mu_fs or {})
    if bag is None:
        bag = addrs_inv(mu_fs)
    q = []
    for i, th in enumerate(threads, start=1):
        lcur, term = th if isinstance(th, tuple) else (L, th)
        q.append(Thread(i, lcur, bag, term))
    nxt = max([*mu_fi, *mu_fs], default=-1) + 1
    return SchedState(mu_fi, mu_fs, tuple(q), nxt, len(q) + 1)


def _wrap(bag: Bag, t: Term) -> Term:
    # withRefs-Opt: collapse a directly nested block by intersecting the bags
    while isinstance(t, WithRefs) and isinstance(t.bag, Bag) and all(isinstance(x, RefFS) for x in t.bag.items):
        bag = addrs_inv(addrs(bag) & addrs(t.bag))
        t = t.body
    return WithRefs(bag, t)


class Scheduler:
    def __init__(self, mode: Optional[VariantConfig] = None):
        mode = mode or concurrent_mode()
        if not mode.concurrent:
            mode = replace(mode, concurrent=True)
        if not mode.has_fs:
            raise ValueError("the concurrent runtime needs the fs or fs-au calculus")
        self.mode = mode
        self.engine = Engine(mode, fuel=float("inf"))

    def step(self, s: SchedState, n: int = 0) -> Tuple[SchedState, SchedEvent]:
        if not s.queue:
            raise ValueError("empty thread queue")
        k, rest = s.queue[0], s.queue[1:]
        t = k.term
        if isinstance(t, LIOv):
            done = ThreadResult(k.tid, "Value", k.lcur, t.body)
            return replace(s, queue=rest, finished=s.finished + (done,)), SchedEvent(n, k.tid, "T-done", k.lcur)
        if isinstance(t, (Diverge, Bottom)):
            dead = ThreadResult(k.tid, "Diverged", k.lcur)
            return replace(s, queue=rest, finished=s.finished + (dead,)), SchedEvent(n, k.tid, "T-stuck", k.lcur)
        st = MachineState(k.lcur, s.mu_fi, s.mu_fs, s.next_addr, self.mode)
        res = self.engine.step(Configuration(st, _wrap(k.bag, t)))
        if isinstance(res, Terminal):
            out = res.outcome
            if isinstance(out, MonitorError):
                dead = ThreadResult(k.tid, "MonitorError", out.state.lcur, None, f"{out.error} {out.rule}: {out.reason}")
            elif isinstance(out, Diverged):
                dead = ThreadResult(k.tid, "Diverged", out.state.lcur)
            else:  # pragma: no cover - engine fuel is unbounded here
                raise RuntimeError("unexpected fuel exhaustion inside a quantum")
            fin = out.state
            s2 = replace(
                s, mu_fi=fin.mu_fi, mu_fs=fin.mu_fs, next_addr=fin.next_addr, queue=rest, finished=s.finished + (dead,)
            )
            return s2, SchedEvent(n, k.tid, "T-stuck", fin.lcur, res.rule)
        cfg = res.cfg
        fin = cfg.state
        term = cfg.term
        if isinstance(term, WithRefs):
            bag, body = term.bag, term.body
        else:  # withRefs-Done cannot fire: values are retired before stepping
            bag, body = k.bag, term
        moved = Thread(k.tid, fin.lcur, bag, body)
        base = dict(mu_fi=fin.mu_fi, mu_fs=fin.mu_fs, next_addr=fin.next_addr)
        if isinstance(res, ForkEvent):
            child = Thread(s.next_tid, fin.lcur, bag, res.child)
            s2 = replace(s, queue=rest + (moved, child), next_tid=s.next_tid + 1, **base)
            return s2, SchedEvent(n, k.tid, "T-fork", fin.lcur, res.rule)
        assert isinstance(res, Next)
        return replace(s, queue=rest + (moved,), **base), SchedEvent(n, k.tid, "T-step", fin.lcur, res.rule)


def sched_step(s: SchedState, mode: Optional[VariantConfig] = None) -> SchedState:
    return Scheduler(mode).step(s)[0]


def check_scope_invariant(s: SchedState) -> bool:
    """Every FS cell a thread can reach has a label-on-label below the thread's l_cur."""
    for k in s.queue:
        for a in addrs_plus(s.mu_fs, k.bag):
            cell = s.mu_fs.get(a)
            if cell is not None and not cell.label <= k.lcur:
                return False
    return True


def run_concurrent(
    s: SchedState,
    mode: Optional[VariantConfig] = None,
    fuel: Optional[int] = None,
    on_step: Optional[Callable[[SchedState, SchedEvent], None]] = None,
    check_invariant: bool = False,
) -> ConcOutcome:
    sched = Scheduler(mode)
    fuel = default_fuel() if fuel is None else fuel
    trace: List[SchedEvent] = []
    n = 0
    while s.queue:
        if n >= fuel:
            return ConcOutcome("FuelExhausted", s, tuple(trace), n, tuple(sched.engine.scope_violations))
        n += 1
        s, ev = sched.step(s, n)
        trace.append(ev)
        if check_invariant and not check_scope_invariant(s):
            raise AssertionError(f"scope invariant violated after step {n}")
        if on_step is not None:
            on_step(s, ev)
    return ConcOutcome("Done", s, tuple(trace), n, tuple(sched.engine.scope_violations))


def delay(n: int) -> Term:
    """``n`` no-op monadic steps, used to let other threads run first."""
    from .syntax.terms import UNIT, Return, seq

    if n <= 0:
        return Return(UNIT)
    return seq(*[Return(UNIT) for _ in range(n)])


__all__ = [
    "ConcOutcome",
    "SchedEvent",
    "SchedState",
    "Scheduler",
    "Thread",
    "ThreadResult",
    "check_scope_invariant",
    "concurrent_mode",
    "delay",
    "initial_sched",
    "run_concurrent",
    "sched_step",
]
