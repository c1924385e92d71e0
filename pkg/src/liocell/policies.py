"""A small imperative language, its desugaring into the FS calculus, and two
classic label-change monitors (no-sensitive-upgrade and permissive-upgrade)
used for side-by-side permissiveness comparisons.

Concrete syntax, one statement per line (braces delimit blocks)::

    input h H
    x, y := true
    if h {
      y := false
    } else {
      skip
    }
    upgrade x H
    withRefs(y) { ... }
    reset x L false
    output(x)        # or output(1) / output(0)
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .lattice import PU_THREE_POINT, TWO_POINT, Label, LatticeSpec
from .machine import Configuration, Diverged, Engine, MonitorError, Value, VariantConfig, initial_state
from .syntax.terms import (
    FALSE,
    FI,
    FS,
    TRUE,
    UNIT,
    Bag,
    Bind,
    BoolLit,
    Downgrade,
    If,
    LabelLit,
    Lam,
    NewRef,
    ReadRef,
    RefFI,
    Return,
    Term,
    ToLabeled,
    Upgrade,
    Var,
    WithRefs,
    WriteRef,
    do,
    seq,
)


class ImpError(ValueError):
    def __init__(self, msg: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


# -- AST ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: bool


@dataclass(frozen=True)
class VarE:
    name: str


Expr = Union[Lit, VarE]


@dataclass(frozen=True)
class Input:
    name: str
    label: str
    line: int = 0


@dataclass(frozen=True)
class Assign:
    names: Tuple[str, ...]
    expr: Expr
    line: int = 0


@dataclass(frozen=True)
class IfS:
    cond: str
    then: Tuple
    els: Tuple = ()
    line: int = 0


@dataclass(frozen=True)
class Skip:
    line: int = 0


@dataclass(frozen=True)
class Output:
    expr: Expr
    line: int = 0


@dataclass(frozen=True)
class UpgradeS:
    name: str
    label: str
    line: int = 0


@dataclass(frozen=True)
class WithRefsS:
    names: Tuple[str, ...]
    body: Tuple
    line: int = 0


@dataclass(frozen=True)
class Reset:
    name: str
    label: str
    value: bool
    line: int = 0


Stmt = Union[Input, Assign, IfS, Skip, Output, UpgradeS, WithRefsS, Reset]


@dataclass(frozen=True)
class ImpProgram:
    stmts: Tuple[Stmt, ...]
    name: str = ""

    @property
    def inputs(self) -> List[Input]:
        return [s for s in self.stmts if isinstance(s, Input)]


def show_stmt(s: Stmt) -> str:
    if isinstance(s, Input):
        return f"input {s.name} {s.label}"
    if isinstance(s, Assign):
        e = s.expr
        rhs = ("true" if e.value else "false") if isinstance(e, Lit) else e.name
        return f"{', '.join(s.names)} := {rhs}"
    if isinstance(s, IfS):
        return f"if {s.cond} {{...}}"
    if isinstance(s, Skip):
        return "skip"
    if isinstance(s, Output):
        e = s.expr
        return f"output({('1' if e.value else '0') if isinstance(e, Lit) else e.name})"
    if isinstance(s, UpgradeS):
        return f"upgrade {s.name} {s.label}"
    if isinstance(s, WithRefsS):
        return f"withRefs({', '.join(s.names)}) {{...}}"
    return f"reset {s.name} {s.label} {'true' if s.value else 'false'}"


# -- parser --------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(#[^\n]*)|(:=)|([{}(),])|([A-Za-z_][A-Za-z0-9_]*|\d+)|(\n)|(\S))")


def _tokens(src: str):
    line = 1
    for raw in src.splitlines():
        pos = 0
        while pos < len(raw):
            m = _TOKEN.match(raw, pos)
            if not m or m.end() == pos:
                break
            pos = m.end()
            if m.group(1):
                break
            if m.group(6):
                raise ImpError(f"unexpected character {m.group(6)!r}", line)
            tok = m.group(2) or m.group(3) or m.group(4)
            if tok:
                yield tok, line
        yield "\n", line
        line += 1


class _ImpParser:
    def __init__(self, src: str):
        self.toks = list(_tokens(src))
        self.i = 0

    def peek(self) -> str:
        while self.i < len(self.toks) and self.toks[self.i][0] == "\n":
            self.i += 1
        return self.toks[self.i][0] if self.i < len(self.toks) else ""

    def line(self) -> int:
        self.peek()
        return self.toks[self.i][1] if self.i < len(self.toks) else (self.toks[-1][1] if self.toks else 0)

    def take(self, want: Optional[str] = None) -> str:
        tok = self.peek()
        if not tok:
            raise ImpError("unexpected end of program", self.line())
        if want is not None and tok != want:
            raise ImpError(f"expected {want!r}, found {tok!r}", self.line())
        self.i += 1
        return tok

    def ident(self) -> str:
        tok = self.take()
        if not re.match(r"[A-Za-z_]", tok) or tok in _RESERVED:
            raise ImpError(f"expected a variable, found {tok!r}", self.line())
        return tok

    def block(self) -> Tuple[Stmt, ...]:
        self.take("{")
        out = []
        while self.peek() != "}":
            if not self.peek():
                raise ImpError("unclosed block", self.line())
            out.append(self.stmt())
        self.take("}")
        return tuple(out)

    def expr(self) -> Expr:
        tok = self.take()
        if tok in ("true", "1"):
            return Lit(True)
        if tok in ("false", "0"):
            return Lit(False)
        if not re.match(r"[A-Za-z_]", tok):
            raise ImpError(f"bad expression {tok!r}", self.line())
        return VarE(tok)

    def names(self) -> Tuple[str, ...]:
        out = [self.ident()]
        while self.peek() == ",":
            self.take(",")
            out.append(self.ident())
        return tuple(out)

    def stmt(self) -> Stmt:
        ln = self.line()
        tok = self.peek()
        if tok == "input":
            self.take()
            return Input(self.ident(), self.take(), ln)
        if tok == "skip":
            self.take()
            return Skip(ln)
        if tok == "if":
            self.take()
            cond = self.ident()
            then = self.block()
            els: Tuple[Stmt, ...] = ()
            if self.peek() == "else":
                self.take()
                els = self.block()
            return IfS(cond, then, els, ln)
        if tok == "output":
            self.take()
            self.take("(")
            e = self.expr()
            self.take(")")
            return Output(e, ln)
        if tok == "upgrade":
            self.take()
            return UpgradeS(self.ident(), self.take(), ln)
        if tok == "reset":
            self.take()
            name, lab = self.ident(), self.take()
            e = self.expr()
            if not isinstance(e, Lit):
                raise ImpError("reset needs a literal", ln)
            return Reset(name, lab, e.value, ln)
        if tok == "withRefs":
            self.take()
            self.take("(")
            names = self.names()
            self.take(")")
            return WithRefsS(names, self.block(), ln)
        names = self.names()
        self.take(":=")
        return Assign(names, self.expr(), ln)


_RESERVED = {"input", "skip", "if", "else", "output", "upgrade", "reset", "withRefs", "true", "false"}


def parse_imp(src: str, name: str = "") -> ImpProgram:
    p = _ImpParser(src)
    out = []
    while p.peek():
        if p.peek() == "}":
            raise ImpError("unbalanced '}'", p.line())
        out.append(p.stmt())
    return ImpProgram(tuple(out), name)


def parse_imp_file(path) -> ImpProgram:
    with open(path) as fh:
        return parse_imp(fh.read(), str(path))


def split_programs(src: str, default_name: str = "program") -> List[ImpProgram]:
    """Split a multi-program file on ``== name`` header lines."""
    progs: List[ImpProgram] = []
    name, buf = None, []

    def flush():
        body = [x for x in buf if x.strip() and not x.strip().startswith("#")]
        if body:
            progs.append(parse_imp("\n".join(buf), name or default_name))

    for raw in src.splitlines():
        m = re.match(r"\s*==\s*(.+?)\s*$", raw)
        if m:
            flush()
            name, buf = m.group(1), []
        else:
            buf.append(raw)
    flush()
    return progs


# -- outcomes --------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyOutcome:
    status: str  # Accepted | Rejected
    outputs: Tuple[bool, ...] = ()
    labels: Tuple[Tuple[str, str], ...] = ()
    at: str = ""
    reason: str = ""

    @property
    def accepted(self) -> bool:
        return self.status == "Accepted"


class _Reject(Exception):
    def __init__(self, stmt: Stmt, reason: str):
        self.stmt, self.reason = stmt, reason


# -- desugaring into the FS calculus ------------------------------------------------------


@dataclass(frozen=True)
class Desugared:
    term: Term
    inputs: Tuple[str, ...]
    output_cells: Tuple[Tuple[int, int], ...]  # (flag address, value address) per output statement


def _collect_outputs(stmts, acc):
    for s in stmts:
        if isinstance(s, Output):
            acc.append(s)
        elif isinstance(s, IfS):
            _collect_outputs(s.then, acc)
            _collect_outputs(s.els, acc)
        elif isinstance(s, WithRefsS):
            _collect_outputs(s.body, acc)
    return acc


class _Desugar:
    def __init__(self, prog: ImpProgram, lattice: LatticeSpec):
        self.lattice = lattice
        self.inputs: Dict[str, str] = {}  # variable -> label name
        self.vars: set = set()
        self.outputs: Dict[int, Tuple[str, str]] = {}

    def lab(self, name: str, s: Stmt) -> Term:
        if not self.lattice.has(name):
            raise ImpError(f"unknown label {name!r}", s.line)
        return LabelLit(self.lattice.label(name))

    def read(self, name: str, s: Stmt) -> Term:
        if name in self.inputs:
            return ReadRef(FI, Var(name))
        if name in self.vars:
            return ReadRef(FS, Var(name))
        raise ImpError(f"variable {name!r} used before assignment", s.line)

    def value(self, e: Expr, s: Stmt, k) -> Term:
        if isinstance(e, Lit):
            return k(BoolLit(e.value))
        v = f"v'{s.line}"
        return Bind(self.read(e.name, s), Lam(v, k(Var(v))))

    def block(self, stmts, top: bool, scope: Optional[frozenset]) -> Term:
        parts: List = []
        for s in stmts:
            parts.extend(self.stmt(s, top, scope))
        if not parts:
            return Return(UNIT)
        if isinstance(parts[-1], tuple):
            parts.append(Return(UNIT))
        return do(*parts)

    def fs_var(self, name: str, s: Stmt, scope) -> Var:
        if name not in self.vars:
            if name in self.inputs:
                raise ImpError(f"input {name!r} cannot be modified", s.line)
            raise ImpError(f"variable {name!r} used before assignment", s.line)
        if scope is not None and name not in scope:
            raise ImpError(f"variable {name!r} is outside the enclosing withRefs block", s.line)
        return Var(name)

    def stmt(self, s: Stmt, top: bool, scope) -> list:
        if isinstance(s, Input):
            raise ImpError("input declarations must come first", s.line)
        if isinstance(s, Skip):
            return [Return(UNIT)]
        if isinstance(s, Assign):
            out: list = []
            for name in s.names:
                if name in self.inputs:
                    raise ImpError(f"input {name!r} cannot be assigned", s.line)
                if name not in self.vars:
                    if not top or scope is not None:
                        raise ImpError(f"first assignment to {name!r} must be at top level", s.line)
                    if isinstance(s.expr, VarE):
                        rd = self.read(s.expr.name, s)
                        tmp = f"v'{s.line}"
                        out += [(tmp, rd), (name, NewRef(FS, LabelLit(self.lattice.bottom), Var(tmp)))]
                    else:
                        out.append((name, NewRef(FS, LabelLit(self.lattice.bottom), BoolLit(s.expr.value))))
                    self.vars.add(name)
                else:
                    ref = self.fs_var(name, s, scope)
                    out.append(self.value(s.expr, s, lambda v, ref=ref: WriteRef(FS, ref, v)))
            return out
        if isinstance(s, IfS):
            b = f"b'{s.line}"
            cond = self.read(s.cond, s)
            body = Bind(cond, Lam(b, If(Var(b), self.block(s.then, False, scope), self.block(s.els, False, scope))))
            return [ToLabeled(LabelLit(self.lattice.top), body)]
        if isinstance(s, Output):
            flag, val = self.outputs[id(s)]
            return [self.value(s.expr, s, lambda v: seq(WriteRef(FI, Var(flag), TRUE), WriteRef(FI, Var(val), v)))]
        if isinstance(s, UpgradeS):
            return [Upgrade(self.fs_var(s.name, s, scope), self.lab(s.label, s))]
        if isinstance(s, Reset):
            ref = self.fs_var(s.name, s, scope)
            return [Downgrade(ref, self.lab(s.label, s)), WriteRef(FS, ref, BoolLit(s.value))]
        if isinstance(s, WithRefsS):
            refs = tuple(self.fs_var(n, s, scope) for n in s.names)
            inner = frozenset(s.names) if scope is None else frozenset(s.names) & scope
            return [WithRefs(Bag(refs), self.block(s.body, False, inner))]
        raise ImpError(f"unknown statement {s!r}")  # pragma: no cover


def desugar_imp(
    prog: ImpProgram, inputs: Optional[Dict[str, bool]] = None, lattice: LatticeSpec = TWO_POINT
) -> Desugared:
    """Translate to an FS-calculus program.

    Inputs become FI cells allocated first (holding the given values), each
    ``output`` statement gets a pair of L-labeled FI cells (an emitted flag and
    the value), and program variables become FS references at L.
    """
    inputs = inputs or {}
    d = _Desugar(prog, lattice)
    stmts = list(prog.stmts)
    pre: list = []
    addr = 0
    while stmts and isinstance(stmts[0], Input):
        s = stmts.pop(0)
        lab = d.lab(s.label, s)
        d.inputs[s.name] = s.label
        pre.append((s.name, NewRef(FI, lab, BoolLit(bool(inputs.get(s.name, False))))))
        addr += 1
    cells = []
    for k, s in enumerate(_collect_outputs(stmts, [])):
        flag, val = f"out'{k}f", f"out'{k}v"
        d.outputs[id(s)] = (flag, val)
        bot = LabelLit(lattice.bottom)
        pre += [(flag, NewRef(FI, bot, FALSE)), (val, NewRef(FI, bot, FALSE))]
        cells.append((addr, addr + 1))
        addr += 2
    body = d.block(stmts, True, None)
    term = do(*pre, body) if pre else body
    return Desugared(term, tuple(d.inputs), tuple(cells))


def input_combinations(prog: ImpProgram) -> List[Dict[str, bool]]:
    names = [i.name for i in prog.inputs]
    return [dict(zip(names, vals)) for vals in itertools.product((False, True), repeat=len(names))]


def run_lio(prog: ImpProgram, calculus: str, inputs: Dict[str, bool], fuel: int = 100_000) -> PolicyOutcome:
    ds = desugar_imp(prog, inputs)
    mode = VariantConfig(calculus=calculus, fuel=fuel)
    out = Engine(mode).run(Configuration(initial_state(mode), ds.term))
    if isinstance(out, Value):
        emitted = []
        for flag, val in ds.output_cells:
            f = out.state.mu_fi[flag].body
            if f == TRUE:
                emitted.append(out.state.mu_fi[val].body == TRUE)
        labels = tuple(
            (n, f"{c.label}/{c.body.label}") for n, c in zip(_var_order(prog), [out.state.mu_fs[a] for a in sorted(out.state.mu_fs)])
        )
        return PolicyOutcome("Accepted", tuple(emitted), labels)
    if isinstance(out, MonitorError):
        return PolicyOutcome("Rejected", reason=f"{out.error} in {out.rule}: {out.reason}")
    if isinstance(out, Diverged):
        return PolicyOutcome("Rejected", reason="diverged (failed write)")
    return PolicyOutcome("Rejected", reason="fuel exhausted")


def _var_order(prog: ImpProgram) -> List[str]:
    seen: List[str] = []
    for s in prog.stmts:
        if isinstance(s, Assign):
            for n in s.names:
                if n not in seen:
                    seen.append(n)
    return seen


# -- reference monitors ---------------------------------------------------------------------


class _Monitor:
    lattice: LatticeSpec = TWO_POINT

    def __init__(self, inputs: Dict[str, bool]):
        self.inputs = inputs
        self.val: Dict[str, bool] = {}
        self.lab: Dict[str, Label] = {}
        self.out: List[bool] = []
        self.L = self.lattice.bottom

    def label(self, name: str, s: Stmt) -> Label:
        if not self.lattice.has(name):
            raise ImpError(f"unknown label {name!r}", s.line)
        return self.lattice.label(name)

    def get(self, e: Expr, s: Stmt) -> Tuple[bool, Label]:
        if isinstance(e, Lit):
            return e.value, self.L
        if e.name not in self.val:
            raise ImpError(f"variable {e.name!r} used before assignment", s.line)
        return self.val[e.name], self.lab[e.name]

    def run(self, prog: ImpProgram) -> PolicyOutcome:
        try:
            self.block(prog.stmts, self.L)
        except _Reject as r:
            return PolicyOutcome("Rejected", tuple(self.out), self.snapshot(), show_stmt(r.stmt), r.reason)
        return PolicyOutcome("Accepted", tuple(self.out), self.snapshot())

    def snapshot(self):
        return tuple((n, str(self.lab[n])) for n in self.val)

    def block(self, stmts, pc: Label) -> None:
        for s in stmts:
            self.stmt(s, pc)

    def stmt(self, s: Stmt, pc: Label) -> None:
        if isinstance(s, Input):
            self.val[s.name] = bool(self.inputs.get(s.name, False))
            self.lab[s.name] = self.label(s.label, s)
        elif isinstance(s, Skip):
            pass
        elif isinstance(s, Assign):
            v, l = self.get(s.expr, s)
            for n in s.names:
                self.assign(n, v, l, pc, s)
        elif isinstance(s, IfS):
            v, l = self.get(VarE(s.cond), s)
            self.check_branch(l, s)
            self.block(s.then if v else s.els, pc | l)
        elif isinstance(s, Output):
            v, l = self.get(s.expr, s)
            if not (pc | l) <= self.L:
                raise _Reject(s, f"output at level {pc | l}")
            self.out.append(v)
        elif isinstance(s, UpgradeS):
            self.need(s.name, s)
            if not pc <= self.lab[s.name]:
                raise _Reject(s, f"upgrade of {s.name} under pc={pc}")
            self.lab[s.name] = self.lab[s.name] | self.label(s.label, s)
        elif isinstance(s, Reset):
            self.need(s.name, s)
            if not pc <= self.lab[s.name]:
                raise _Reject(s, f"reset of {s.name} under pc={pc}")
            self.lab[s.name] = self.label(s.label, s) | pc
            self.val[s.name] = s.value
        elif isinstance(s, WithRefsS):
            # scoping only matters to the auto-upgrading monitor
            self.block(s.body, pc)

    def need(self, name: str, s: Stmt) -> None:
        if name not in self.val:
            raise ImpError(f"variable {name!r} used before assignment", s.line)

    def check_branch(self, l: Label, s: Stmt) -> None:
        pass

    def assign(self, n, v, l, pc, s) -> None:  # pragma: no cover - abstract
        raise NotImplementedError


class NSUMonitor(_Monitor):
    lattice = TWO_POINT

    def assign(self, n, v, l, pc, s):
        if n in self.val and not pc <= self.lab[n]:
            raise _Reject(s, f"sensitive upgrade of {n} (label {self.lab[n]}) under pc={pc}")
        self.val[n] = v
        self.lab[n] = l | pc


class PUMonitor(_Monitor):
    lattice = PU_THREE_POINT

    def __init__(self, inputs):
        super().__init__(inputs)
        self.P = self.lattice.top

    def check_branch(self, l, s):
        if l == self.P:
            raise _Reject(s, "branch on a partially-leaked (P) variable")

    def get(self, e, s):
        v, l = super().get(e, s)
        return v, l

    def assign(self, n, v, l, pc, s):
        old = self.lab.get(n, self.L)
        self.val[n] = v
        if pc <= old or n not in self.lab:
            self.lab[n] = l | pc
        else:
            self.lab[n] = self.P


def run_nsu(prog: ImpProgram, inputs: Optional[Dict[str, bool]] = None) -> PolicyOutcome:
    return NSUMonitor(inputs or {}).run(prog)


def run_pu(prog: ImpProgram, inputs: Optional[Dict[str, bool]] = None) -> PolicyOutcome:
    return PUMonitor(inputs or {}).run(prog)


# -- comparison -----------------------------------------------------------------------------

MONITORS = ("NSU", "PU", "FS", "FS-AU")


@dataclass(frozen=True)
class Verdict:
    monitor: str
    accepted: bool
    outputs: Tuple[Tuple[bool, ...], ...]  # one entry per input combination
    runs: Tuple[PolicyOutcome, ...]

    @property
    def label(self) -> str:
        return "Accept" if self.accepted else "Reject"

    def show_outputs(self) -> str:
        distinct = sorted(set(self.outputs))
        fmt = lambda o: "[" + ",".join("1" if b else "0" for b in o) + "]"
        if len(distinct) == 1:
            return fmt(distinct[0])
        return "/".join(fmt(o) for o in self.outputs)


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    verdicts: Tuple[Verdict, ...]

    def __getitem__(self, monitor: str) -> Verdict:
        for v in self.verdicts:
            if v.monitor == monitor:
                return v
        raise KeyError(monitor)


def compare_policies(prog: ImpProgram, fuel: int = 100_000) -> ComparisonRow:
    combos = input_combinations(prog)
    runners = {
        "NSU": lambda i: run_nsu(prog, i),
        "PU": lambda i: run_pu(prog, i),
        "FS": lambda i: run_lio(prog, "fs", i, fuel),
        "FS-AU": lambda i: run_lio(prog, "fs-au", i, fuel),
    }
    verdicts = []
    for name in MONITORS:
        runs = tuple(runners[name](c) for c in combos)
        ok = all(r.accepted for r in runs)
        verdicts.append(Verdict(name, ok, tuple(r.outputs for r in runs if r.accepted), runs))
    return ComparisonRow(prog.name, tuple(verdicts))


def format_table(rows: Sequence[ComparisonRow]) -> str:
    width = max([len(r.name) for r in rows] + [7])
    head = f"{'program':<{width}}  " + "  ".join(f"{m:<14}" for m in MONITORS)
    lines = [head, "-" * len(head)]
    for r in rows:
        cells = []
        for m in MONITORS:
            v = r[m]
            cells.append(f"{v.label + (' ' + v.show_outputs() if v.accepted else ''):<14}")
        lines.append(f"{r.name:<{width}}  " + "  ".join(cells))
    return "\n".join(lines)


__all__ = [
    "ComparisonRow",
    "Desugared",
    "ImpError",
    "ImpProgram",
    "NSUMonitor",
    "PUMonitor",
    "PolicyOutcome",
    "Verdict",
    "compare_policies",
    "desugar_imp",
    "format_table",
    "input_combinations",
    "parse_imp",
    "parse_imp_file",
    "run_lio",
    "run_nsu",
    "run_pu",
    "split_programs",
]
