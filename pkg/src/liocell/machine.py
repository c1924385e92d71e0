"""Sequential small-step engine.

One :class:`Engine` covers every sequential calculus variant. The calculus is
picked by :class:`VariantConfig`: ``base`` (labels only), ``fi`` (flow-insensitive
references), ``fs`` (both reference kinds) and ``fs-au`` (``fs`` plus the
auto-upgrade sweep on every ``unlabel``).

Stores map integer addresses to cells. An FI cell is ``Lb l t``; an FS cell is
``Lb l_o (Lb l_d t)`` where ``l_o`` (the label on the label) is the current
label at allocation time. Both stores draw addresses from one counter, so their
domains are disjoint.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from .lattice import L, Label, LatticeSpec, TWO_POINT
from .syntax.pretty import pretty, truncate
from .syntax.terms import (
    DIVERGE,
    FI,
    FS,
    UNIT,
    App,
    Bag,
    Bind,
    BoolLit,
    Bottom,
    CopyRef,
    Diverge,
    Downgrade,
    Fix,
    Fork,
    GetLabel,
    Hole,
    If,
    LabelLit,
    LabelOf,
    LabelOfRef,
    LabelOp,
    LabelTerm,
    Lam,
    Lb,
    LIOv,
    NewRef,
    ReadRef,
    RefFI,
    RefFS,
    Return,
    Term,
    ToLabeled,
    Unlabel,
    Unwrap,
    Upgrade,
    Var,
    WithRefs,
    WrapRef,
    WriteRef,
    is_value,
    ref_fs_addrs,
    subst,
    subterms,
)

CALCULI = ("base", "fi", "fs", "fs-au")
SECURITY = ("secure", "naive")
DEFAULT_FUEL = 100_000

LABEL_CHECK = "LabelCheck"
STUCK_REDEX = "StuckRedex"


def default_fuel() -> int:
    raw = os.environ.get("LIOCELL_FUEL")
    if raw:
        try:
            return max(0, int(raw))
        except ValueError:
            pass
    return DEFAULT_FUEL


@dataclass(frozen=True)
class VariantConfig:
    calculus: str = "fs"
    security: str = "secure"
    fuel: int = field(default_factory=default_fuel)
    # Test-only: check l_cur <= l and l_cur <= l' separately on FS writes.
    split_write_check: bool = False
    # Set by the concurrent runtime: strikes toLabeled, allows forkLIO.
    concurrent: bool = False

    def __post_init__(self):
        if self.calculus not in CALCULI:
            raise ValueError(f"unknown calculus {self.calculus!r}; expected one of {CALCULI}")
        if self.security not in SECURITY:
            raise ValueError(f"unknown security mode {self.security!r}")
        if self.security == "naive" and self.calculus not in ("fs", "fs-au"):
            raise ValueError("naive mode only applies to the fs and fs-au calculi")
        if self.fuel < 0:
            raise ValueError("fuel must be non-negative")

    @property
    def has_fi(self) -> bool:
        return self.calculus != "base"

    @property
    def has_fs(self) -> bool:
        return self.calculus in ("fs", "fs-au")

    @property
    def auto_upgrade(self) -> bool:
        return self.calculus == "fs-au"


@dataclass(frozen=True)
class MachineState:
    lcur: Label
    mu_fi: Mapping[int, Term] = field(default_factory=dict)
    mu_fs: Mapping[int, Term] = field(default_factory=dict)
    next_addr: int = 0
    mode: VariantConfig = field(default_factory=VariantConfig)

    @property
    def lattice(self) -> LatticeSpec:
        return self.lcur.spec

    def check(self) -> None:
        """Structural invariants: disjoint domains, doubly-labeled FS cells."""
        overlap = set(self.mu_fi) & set(self.mu_fs)
        if overlap:
            raise AssertionError(f"store domains overlap at {sorted(overlap)}")
        for a, c in self.mu_fs.items():
            if not (isinstance(c, Lb) and isinstance(c.body, Lb)):
                raise AssertionError(f"fs:{a} is not doubly labeled")
        for a, c in self.mu_fi.items():
            if not isinstance(c, Lb):
                raise AssertionError(f"fi:{a} is not labeled")
        top = max([*self.mu_fi, *self.mu_fs], default=-1)
        if top >= self.next_addr:
            raise AssertionError("address counter behind allocated addresses")


def initial_state(mode: Optional[VariantConfig] = None, lcur: Optional[Label] = None) -> MachineState:
    return MachineState(lcur=lcur or L, mode=mode or VariantConfig())


@dataclass(frozen=True)
class Configuration:
    state: MachineState
    term: Term


# -- outcomes ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Value:
    value: Term
    state: MachineState
    steps: int = 0

    kind = "Value"


@dataclass(frozen=True)
class Diverged:
    state: MachineState
    steps: int = 0

    kind = "Diverged"


@dataclass(frozen=True)
class MonitorError:
    error: str  # LabelCheck | StuckRedex
    rule: str
    reason: str
    state: MachineState
    steps: int = 0

    kind = "MonitorError"


@dataclass(frozen=True)
class FuelExhausted:
    state: MachineState
    term: Term
    steps: int = 0

    kind = "FuelExhausted"


Outcome = Union[Value, Diverged, MonitorError, FuelExhausted]


@dataclass(frozen=True)
class Next:
    cfg: Configuration
    rule: str


@dataclass(frozen=True)
class Terminal:
    outcome: Outcome
    rule: str


@dataclass(frozen=True)
class ForkEvent:
    child: Term
    cfg: Configuration
    rule: str = "forkLIO"


StepResult = Union[Next, Terminal, ForkEvent]


class LabelCheckFailure(Exception):
    def __init__(self, rule: str, reason: str, state: MachineState):
        super().__init__(f"{rule}: {reason}")
        self.rule, self.reason, self.state = rule, reason, state


class _Halt(Exception):
    def __init__(self, outcome_fn: Callable[[int], Outcome], rule: str):
        self.outcome_fn = outcome_fn
        self.rule = rule

    def rebase(self, st: MachineState, rule: Optional[str] = None) -> "_Halt":
        """Same halt, reported against a different (merged) state."""
        old = self.outcome_fn

        def fn(steps: int) -> Outcome:
            return replace(old(steps), state=st)

        return _Halt(fn, rule or self.rule)


# -- store helpers ---------------------------------------------------------------------------


def addrs(bag: Term) -> FrozenSet[int]:
    """Top-level FS addresses of a bag value."""
    if not isinstance(bag, Bag):
        return frozenset()
    return frozenset(x.addr for x in bag.items if isinstance(x, RefFS))


def addrs_inv(s: Iterable[int]) -> Bag:
    """Canonical bag, sorted by address."""
    return Bag(tuple(RefFS(a) for a in sorted(set(s))))


def addrs_plus(mu: Mapping[int, Term], v: Term) -> FrozenSet[int]:
    """FS addresses reachable from ``v``, following stored cells transitively."""
    seen = set()
    work = list(ref_fs_addrs(v))
    while work:
        a = work.pop()
        if a in seen:
            continue
        seen.add(a)
        if a in mu:
            work.extend(ref_fs_addrs(mu[a]) - seen)
    return frozenset(seen)


def merge_stores(left: Mapping[int, Term], right: Mapping[int, Term]) -> Dict[int, Term]:
    """Union of both stores; the left entry wins on shared addresses."""
    out = dict(right)
    out.update(left)
    return out


def upgrade_store(state: MachineState, l: Label) -> MachineState:
    """Upgrade every FS cell to ``l`` in ascending address order.

    Raises :class:`LabelCheckFailure` if some cell's label on the label does
    not admit the current label.
    """
    if not state.mu_fs:
        return state
    mu = dict(state.mu_fs)
    for a in sorted(mu):
        cell = mu[a]
        lo, inner = cell.label, cell.body
        if not state.lcur <= lo:
            raise LabelCheckFailure(
                "upgradeStore", f"l_cur={state.lcur} does not flow to label-on-label {lo} of fs:{a}", state
            )
        mu[a] = Lb(lo, Lb(inner.label | l, inner.body))
    return replace(state, mu_fs=mu)


# -- primitive sets ----------------------------------------------------------------------------


def primitive_violations(t: Term, mode: VariantConfig) -> List[str]:
    """Constructs in ``t`` outside the selected calculus."""
    bad = []
    for x in subterms(t):
        name = None
        if isinstance(x, (NewRef, ReadRef, WriteRef, LabelOfRef)):
            if x.flavor == FI and not mode.has_fi:
                name = f"{type(x).__name__} fi"
            if x.flavor == FS and not mode.has_fs:
                name = f"{type(x).__name__} fs"
        elif isinstance(x, (CopyRef, RefFI)) and not mode.has_fi:
            name = type(x).__name__
        elif isinstance(x, (Upgrade, Downgrade, WithRefs, RefFS)) and not mode.has_fs:
            name = type(x).__name__
        elif isinstance(x, Fork) and not mode.concurrent:
            name = "fork"
        elif isinstance(x, ToLabeled) and mode.concurrent:
            name = "toLabeled"
        if name:
            bad.append(name)
    return bad


# -- the engine ----------------------------------------------------------------------------------

_Red = Tuple[Term, MachineState, str, Optional[Term]]


class Engine:
    """Small-step reducer. Holds the fuel budget shared with nested runs."""

    def __init__(self, mode: Optional[VariantConfig] = None, fuel: Optional[int] = None, observer=None):
        self.mode = mode or VariantConfig()
        self.fuel = self.mode.fuel if fuel is None else fuel
        self.used = 0
        # observer(kind, addr, state) sees allocations and label changes of FS cells
        self.observer = observer
        self.scope_violations: List[str] = []

    # -- public ------------------------------------------------------------------

    def step(self, cfg: Configuration) -> StepResult:
        st = cfg.state
        if self.used >= self.fuel:
            return Terminal(FuelExhausted(st, cfg.term, self.used), "fuel")
        self.used += 1
        try:
            t, st2, rule, child = self._red(cfg.term, st)
        except _Halt as h:
            return Terminal(h.outcome_fn(self.used), h.rule)
        nxt = Configuration(st2, t)
        if child is not None:
            return ForkEvent(child, nxt, rule)
        return Next(nxt, rule)

    def run(self, cfg: Configuration, on_step=None) -> Outcome:
        steps = 0
        while True:
            t = cfg.term
            if isinstance(t, LIOv):
                return Value(t.body, cfg.state, self.used)
            if isinstance(t, (Diverge, Bottom)):
                return Diverged(cfg.state, self.used)
            if is_value(t):
                return MonitorError(STUCK_REDEX, "run", "program is not a computation", cfg.state, self.used)
            res = self.step(cfg)
            steps += 1
            if isinstance(res, Terminal):
                if on_step is not None and res.rule not in ("fuel",):
                    on_step(steps, res.rule, res.outcome.state, None)
                return res.outcome
            if isinstance(res, ForkEvent):
                return MonitorError(
                    STUCK_REDEX, "forkLIO", "forkLIO requires the concurrent runtime", res.cfg.state, self.used
                )
            cfg = res.cfg
            if on_step is not None:
                on_step(steps, res.rule, cfg.state, cfg.term)

    # -- halting helpers -----------------------------------------------------------------

    def _fail(self, rule: str, reason: str, st: MachineState) -> _Halt:
        return _Halt(lambda n: MonitorError(LABEL_CHECK, rule, reason, st, n), rule)

    def _stuck(self, rule: str, reason: str, st: MachineState) -> _Halt:
        return _Halt(lambda n: MonitorError(STUCK_REDEX, rule, reason, st, n), rule)

    def _diverge(self, st: MachineState) -> _Halt:
        return _Halt(lambda n: Diverged(st, n), "diverge")

    def _notify(self, kind: str, addr: int, st: MachineState) -> None:
        if self.observer is not None:
            self.observer(kind, addr, st)

    # -- decomposition -----------------------------------------------------------------

    def _sub(self, t: Term, name: str, st: MachineState) -> Optional[_Red]:
        """Reduce the evaluation position ``name`` of ``t`` if it is not a value."""
        x = getattr(t, name)
        if isinstance(x, Bottom):
            raise self._diverge(st)
        if is_value(x):
            return None
        nx, st2, rule, child = self._red(x, st)
        return replace(t, **{name: nx}), st2, rule, child

    def _label(self, x: Term, rule: str, st: MachineState) -> Label:
        if not isinstance(x, LabelLit):
            raise self._stuck(rule, "expected a label", st)
        if x.label.lattice != st.lcur.lattice:
            raise self._stuck(rule, f"label {x.label.name} is from lattice {x.label.lattice}", st)
        return x.label

    def _fs_cell(self, a: int, rule: str, st: MachineState) -> Lb:
        cell = st.mu_fs.get(a)
        if cell is None:
            if a < st.next_addr:
                msg = f"fs:{a} is outside the current withRefs scope"
                self.scope_violations.append(msg)
            else:
                msg = f"dangling address fs:{a}"
            raise self._stuck(rule, msg, st)
        return cell

    def _fi_cell(self, a: int, rule: str, st: MachineState) -> Lb:
        cell = st.mu_fi.get(a)
        if cell is None:
            raise self._stuck(rule, f"dangling address fi:{a}", st)
        return cell

    def _need_fi(self, rule: str, st: MachineState) -> None:
        if not self.mode.has_fi:
            raise self._stuck(rule, f"not part of the {self.mode.calculus} calculus", st)

    def _need_fs(self, rule: str, st: MachineState) -> None:
        if not self.mode.has_fs:
            raise self._stuck(rule, f"not part of the {self.mode.calculus} calculus", st)

    def _red(self, t: Term, st: MachineState) -> _Red:
        h = _DISPATCH.get(type(t))
        if h is None:
            raise self._stuck(type(t).__name__, "no rule applies", st)
        return h(self, t, st)

    # -- base calculus -----------------------------------------------------------------

    def _app(self, t: App, st):
        r = self._sub(t, "fn", st)
        if r:
            return r
        f = t.fn
        if not isinstance(f, Lam):
            raise self._stuck("app", "application of a non-function", st)
        return subst(f.body, f.var, t.arg), st, "app", None

    def _fix(self, t: Fix, st):
        r = self._sub(t, "fn", st)
        if r:
            return r
        f = t.fn
        if not isinstance(f, Lam):
            raise self._stuck("fix", "fix of a non-function", st)
        return subst(f.body, f.var, t), st, "fix", None

    def _if(self, t: If, st):
        r = self._sub(t, "cond", st)
        if r:
            return r
        c = t.cond
        if not isinstance(c, BoolLit):
            raise self._stuck("if", "condition is not a Boolean", st)
        return (t.then, st, "ifTrue", None) if c.value else (t.els, st, "ifFalse", None)

    def _labelop(self, t: LabelOp, st):
        r = self._sub(t, "left", st) or self._sub(t, "right", st)
        if r:
            return r
        a = self._label(t.left, "labelOp", st)
        b = self._label(t.right, "labelOp", st)
        if t.op == "join":
            out: Term = LabelLit(a | b)
        elif t.op == "meet":
            out = LabelLit(a & b)
        else:
            out = BoolLit(a <= b)
        return out, st, "labelOp", None

    def _return(self, t: Return, st):
        return LIOv(t.body), st, "return", None

    def _bind(self, t: Bind, st):
        r = self._sub(t, "m", st)
        if r:
            return r
        if not isinstance(t.m, LIOv):
            raise self._stuck("bind", "left operand is not a computation", st)
        return App(t.k, t.m.body), st, "bind", None

    def _getlabel(self, t: GetLabel, st):
        return Return(LabelLit(st.lcur)), st, "getLabel", None

    # -- labeled values ----------------------------------------------------------------

    def _labelterm(self, t: LabelTerm, st):
        r = self._sub(t, "lbl", st)
        if r:
            return r
        l = self._label(t.lbl, "label", st)
        if not st.lcur <= l:
            raise self._fail("label", f"l_cur={st.lcur} does not flow to {l}", st)
        return Return(Lb(l, t.body)), st, "label", None

    def _unlabel(self, t: Unlabel, st):
        r = self._sub(t, "body", st)
        if r:
            return r
        lv = t.body
        if not isinstance(lv, Lb):
            raise self._stuck("unlabel", "not a labeled value", st)
        new = st.lcur | lv.label
        rule = "unlabel"
        if self.mode.auto_upgrade:
            rule = "unlabel-au"
            try:
                st = upgrade_store(st, new)
            except LabelCheckFailure as e:
                raise self._fail(rule, e.reason, st)
        return Return(lv.body), replace(st, lcur=new), rule, None

    def _labelof(self, t: LabelOf, st):
        r = self._sub(t, "body", st)
        if r:
            return r
        if not isinstance(t.body, Lb):
            raise self._stuck("labelOf", "not a labeled value", st)
        return LabelLit(t.body.label), st, "labelOf", None

    def _tolabeled(self, t: ToLabeled, st):
        if self.mode.concurrent:
            raise self._stuck("toLabeled", "toLabeled is removed from the concurrent calculus", st)
        r = self._sub(t, "lbl", st)
        if r:
            return r
        l = self._label(t.lbl, "toLabeled", st)
        if not st.lcur <= l:
            raise self._fail("toLabeled", f"l_cur={st.lcur} does not flow to {l}", st)
        inner = Configuration(st, t.body)
        while True:
            body = inner.term
            if isinstance(body, LIOv):
                break
            if isinstance(body, (Diverge, Bottom)):
                raise self._diverge(inner.state)
            if is_value(body):
                raise self._stuck("toLabeled", "body is not a computation", inner.state)
            res = self.step(inner)
            if isinstance(res, Terminal):
                out = res.outcome
                raise _Halt(lambda n, out=out: replace(out, steps=n), res.rule)
            if isinstance(res, ForkEvent):
                raise self._stuck("forkLIO", "forkLIO requires the concurrent runtime", res.cfg.state)
            inner = res.cfg
        end = inner.state
        if not end.lcur <= l:
            raise self._fail("toLabeled", f"inner l_cur={end.lcur} does not flow to {l}", end)
        merged = replace(end, lcur=st.lcur)
        return LabelTerm(LabelLit(l), inner.term.body), merged, "toLabeled", None

    # -- references ----------------------------------------------------------------------

    def _newref(self, t: NewRef, st):
        rule = "newRef-FI" if t.flavor == FI else "newRef-FS"
        (self._need_fi if t.flavor == FI else self._need_fs)(rule, st)
        r = self._sub(t, "lbl", st)
        if r:
            return r
        l = self._label(t.lbl, rule, st)
        if not st.lcur <= l:
            raise self._fail(rule, f"l_cur={st.lcur} does not flow to {l}", st)
        a = st.next_addr
        if t.flavor == FI:
            mu = dict(st.mu_fi)
            mu[a] = Lb(l, t.body)
            st2 = replace(st, mu_fi=mu, next_addr=a + 1)
            self._notify("alloc-fi", a, st2)
            return Return(RefFI(l, a)), st2, rule, None
        mu = dict(st.mu_fs)
        mu[a] = Lb(st.lcur, Lb(l, t.body))
        st2 = replace(st, mu_fs=mu, next_addr=a + 1)
        self._notify("alloc-fs", a, st2)
        return Return(RefFS(a)), st2, rule, None

    def _readref(self, t: ReadRef, st):
        if t.flavor == FI:
            self._need_fi("readRef-FI", st)
            r = self._sub(t, "ref", st)
            if r:
                return r
            ref = t.ref
            if not isinstance(ref, RefFI):
                raise self._stuck("readRef-FI", "not an FI reference", st)
            return Unlabel(self._fi_cell(ref.addr, "readRef-FI", st)), st, "readRef-FI", None
        self._need_fs("readRef-FS", st)
        r = self._sub(t, "ref", st)
        if r:
            return r
        if not isinstance(t.ref, RefFS):
            raise self._stuck("readRef-FS", "not an FS reference", st)
        cell = self._fs_cell(t.ref.addr, "readRef-FS", st)
        inner = cell.body
        return Unlabel(Lb(cell.label | inner.label, inner.body)), st, "readRef-FS", None

    def _writeref(self, t: WriteRef, st):
        if t.flavor == FI:
            rule = "writeRef-FI"
            self._need_fi(rule, st)
            r = self._sub(t, "ref", st)
            if r:
                return r
            ref = t.ref
            if not isinstance(ref, RefFI):
                raise self._stuck(rule, "not an FI reference", st)
            self._fi_cell(ref.addr, rule, st)
            if not st.lcur <= ref.label:
                raise self._fail(rule, f"l_cur={st.lcur} does not flow to {ref.label}", st)
            mu = dict(st.mu_fi)
            mu[ref.addr] = Lb(ref.label, t.body)
            return Return(UNIT), replace(st, mu_fi=mu), rule, None
        self._need_fs("writeRef-FS", st)
        r = self._sub(t, "ref", st)
        if r:
            return r
        if not isinstance(t.ref, RefFS):
            raise self._stuck("writeRef-FS", "not an FS reference", st)
        a = t.ref.addr
        cell = self._fs_cell(a, "writeRef-FS", st)
        lo, ld = cell.label, cell.body.label
        mu = dict(st.mu_fs)
        if self.mode.security == "naive":
            mu[a] = Lb(lo, Lb(ld | st.lcur, t.body))
            st2 = replace(st, mu_fs=mu)
            if not st.lcur <= ld:
                self._notify("relabel", a, st2)
            return Return(UNIT), st2, "writeRef-FS-naive", None
        if self.mode.split_write_check:
            ok = st.lcur <= lo and st.lcur <= ld
        else:
            ok = st.lcur <= (lo | ld)
        if ok:
            mu[a] = Lb(lo, Lb(ld, t.body))
            return Return(UNIT), replace(st, mu_fs=mu), "writeRef-FS", None
        # taint with the label on the label, then diverge
        return Bind(Unlabel(Lb(lo, DIVERGE)), Lam("_", DIVERGE)), st, "writeRef-FS-fail", None

    def _labelofref(self, t: LabelOfRef, st):
        if t.flavor == FI:
            self._need_fi("labelOf-FI", st)
            r = self._sub(t, "ref", st)
            if r:
                return r
            if not isinstance(t.ref, RefFI):
                raise self._stuck("labelOf-FI", "not an FI reference", st)
            return LabelLit(t.ref.label), st, "labelOf-FI", None
        self._need_fs("labelOf-FS", st)
        r = self._sub(t, "ref", st)
        if r:
            return r
        if not isinstance(t.ref, RefFS):
            raise self._stuck("labelOf-FS", "not an FS reference", st)
        cell = self._fs_cell(t.ref.addr, "labelOf-FS", st)
        return Unlabel(Lb(cell.label, LabelLit(cell.body.label))), st, "labelOf-FS", None

    def _copyref(self, t: CopyRef, st):
        self._need_fi("copyRef", st)
        r = self._sub(t, "src", st) or self._sub(t, "dst", st)
        if r:
            return r
        src, dst = t.src, t.dst
        if not (isinstance(src, RefFI) and isinstance(dst, RefFI)):
            raise self._stuck("copyRef", "copyRef needs two FI references", st)
        cell = self._fi_cell(src.addr, "copyRef", st)
        self._fi_cell(dst.addr, "copyRef", st)
        if not src.label <= dst.label:
            raise self._fail("copyRef", f"source label {src.label} does not flow to {dst.label}", st)
        if not st.lcur <= dst.label:
            raise self._fail("copyRef", f"l_cur={st.lcur} does not flow to {dst.label}", st)
        mu = dict(st.mu_fi)
        mu[dst.addr] = Lb(dst.label, cell.body)
        return Return(UNIT), replace(st, mu_fi=mu), "copyRef", None

    def _relabel(self, t, st, up: bool):
        rule = "upgradeRef" if up else "downgradeRef"
        self._need_fs(rule, st)
        r = self._sub(t, "ref", st) or self._sub(t, "lbl", st)
        if r:
            return r
        if not isinstance(t.ref, RefFS):
            raise self._stuck(rule, "not an FS reference", st)
        l2 = self._label(t.lbl, rule, st)
        a = t.ref.addr
        cell = self._fs_cell(a, rule, st)
        lo, inner = cell.label, cell.body
        if not st.lcur <= lo:
            raise self._fail(rule, f"l_cur={st.lcur} does not flow to label-on-label {lo}", st)
        mu = dict(st.mu_fs)
        if up:
            mu[a] = Lb(lo, Lb(inner.label | l2, inner.body))
        else:
            mu[a] = Lb(lo, Lb(lo | (inner.label & l2), DIVERGE))
        st2 = replace(st, mu_fs=mu)
        self._notify("upgrade" if up else "downgrade", a, st2)
        return Return(UNIT), st2, rule, None

    def _upgrade(self, t: Upgrade, st):
        return self._relabel(t, st, True)

    def _downgrade(self, t: Downgrade, st):
        return self._relabel(t, st, False)

    def _bag(self, t: Bag, st):
        for i, x in enumerate(t.items):
            if isinstance(x, Bottom):
                raise self._diverge(st)
            if not is_value(x):
                nx, st2, rule, child = self._red(x, st)
                items = t.items[:i] + (nx,) + t.items[i + 1 :]
                return Bag(items), st2, rule, child
        raise self._stuck("bag", "bag is already a value", st)

    def _withrefs(self, t: WithRefs, st):
        self._need_fs("withRefs", st)
        r = self._sub(t, "bag", st)
        if r:
            return r
        if not isinstance(t.bag, Bag) or not all(isinstance(x, RefFS) for x in t.bag.items):
            raise self._stuck("withRefs", "withRefs expects a bag of FS references", st)
        body = t.body
        if isinstance(body, Bottom):
            raise self._diverge(st)
        if is_value(body):
            return body, st, "withRefs-Done", None
        scope = addrs_plus(st.mu_fs, t.bag)
        restricted = {a: c for a, c in st.mu_fs.items() if a in scope}
        try:
            nb, inner, rule, child = self._red(body, replace(st, mu_fs=restricted))
        except _Halt as h:
            raise h.rebase(self._merge_back(st, h.outcome_fn(0).state), f"withRefs-Ctx[{h.rule}]")
        merged = self._merge_back(st, inner)
        bag = addrs_inv(inner.mu_fs)
        return WithRefs(bag, nb), merged, f"withRefs-Ctx[{rule}]", child

    @staticmethod
    def _merge_back(outer: MachineState, inner: MachineState) -> MachineState:
        return replace(inner, mu_fs=merge_stores(inner.mu_fs, outer.mu_fs))

    def _fork(self, t: Fork, st):
        if not self.mode.concurrent:
            raise self._stuck("forkLIO", "forkLIO requires the concurrent runtime", st)
        return Return(UNIT), st, "forkLIO", t.body

    # -- embedding support ------------------------------------------------------------------

    def _unwrap(self, t: Unwrap, st):
        r = self._sub(t, "body", st)
        if r:
            return r
        if not isinstance(t.body, WrapRef):
            raise self._stuck("unwrap", "unwrap of a non-wrapped reference", st)
        return t.body.body, st, "unwrap", None

    def _wrapref(self, t: WrapRef, st):
        r = self._sub(t, "body", st)
        if r:
            return r
        raise self._stuck("WrapRef", "already a value", st)

    def _diverge_node(self, t, st):
        raise self._diverge(st)

    def _var(self, t: Var, st):
        raise self._stuck("var", f"free variable {t.name}", st)

    def _inert(self, t, st):
        raise self._stuck(type(t).__name__, "value in redex position", st)


_DISPATCH = {
    App: Engine._app,
    Fix: Engine._fix,
    If: Engine._if,
    LabelOp: Engine._labelop,
    Return: Engine._return,
    Bind: Engine._bind,
    GetLabel: Engine._getlabel,
    LabelTerm: Engine._labelterm,
    Unlabel: Engine._unlabel,
    LabelOf: Engine._labelof,
    ToLabeled: Engine._tolabeled,
    NewRef: Engine._newref,
    ReadRef: Engine._readref,
    WriteRef: Engine._writeref,
    LabelOfRef: Engine._labelofref,
    CopyRef: Engine._copyref,
    Upgrade: Engine._upgrade,
    Downgrade: Engine._downgrade,
    Bag: Engine._bag,
    WithRefs: Engine._withrefs,
    Fork: Engine._fork,
    Unwrap: Engine._unwrap,
    WrapRef: Engine._wrapref,
    Diverge: Engine._diverge_node,
    Bottom: Engine._diverge_node,
    Var: Engine._var,
    Hole: Engine._inert,
}


# -- module-level conveniences ----------------------------------------------------------------


def step(cfg: Configuration) -> StepResult:
    return Engine(cfg.state.mode).step(cfg)


def run(cfg: Configuration, fuel: Optional[int] = None, on_step=None, observer=None) -> Outcome:
    return Engine(cfg.state.mode, fuel=fuel, observer=observer).run(cfg, on_step=on_step)


def run_term(
    t: Term,
    mode: Optional[VariantConfig] = None,
    state: Optional[MachineState] = None,
    lcur: Optional[Label] = None,
) -> Outcome:
    mode = mode or (state.mode if state is not None else VariantConfig())
    st = state if state is not None else initial_state(mode, lcur)
    st = replace(st, mode=mode)
    return run(Configuration(st, t))


def trace_line(n: int, rule: str, st: MachineState, term: Optional[Term]) -> str:
    shown = "-" if term is None else truncate(pretty(term, frozenset(st.lattice.names)), 120)
    return f"step={n} rule={rule} lcur={st.lcur} term={shown}"


def trace(cfg: Configuration, fuel: Optional[int] = None) -> Tuple[List[str], Outcome]:
    lines: List[str] = []

    def on(n, rule, st, term):
        lines.append(trace_line(n, rule, st, term))

    out = run(cfg, fuel=fuel, on_step=on)
    return lines, out


def describe(out: Outcome) -> str:
    """One-line outcome summary."""
    lat = out.state.lattice.names
    if isinstance(out, Value):
        return f"Value {pretty(out.value, frozenset(lat))} lcur={out.state.lcur}"
    if isinstance(out, Diverged):
        return f"Diverged lcur={out.state.lcur}"
    if isinstance(out, MonitorError):
        return f"MonitorError {out.error} rule={out.rule} ({out.reason}) lcur={out.state.lcur}"
    return f"FuelExhausted after {out.steps} steps lcur={out.state.lcur}"


def make_state(
    lcur: Label = L,
    fi: Optional[Mapping[int, Term]] = None,
    fs: Optional[Mapping[int, Term]] = None,
    mode: Optional[VariantConfig] = None,
) -> MachineState:
    fi, fs = dict(fi or {}), dict(fs or {})
    nxt = max([*fi, *fs], default=-1) + 1
    return MachineState(lcur, fi, fs, nxt, mode or VariantConfig())


__all__ = [
    "CALCULI",
    "Configuration",
    "Diverged",
    "Engine",
    "ForkEvent",
    "FuelExhausted",
    "LabelCheckFailure",
    "MachineState",
    "MonitorError",
    "Next",
    "Outcome",
    "Terminal",
    "TWO_POINT",
    "Value",
    "VariantConfig",
    "addrs",
    "addrs_inv",
    "addrs_plus",
    "describe",
    "initial_state",
    "make_state",
    "merge_stores",
    "primitive_violations",
    "run",
    "run_term",
    "step",
    "trace",
    "trace_line",
    "upgrade_store",
]
