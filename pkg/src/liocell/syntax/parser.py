"""S-expression surface syntax.

Surface programs never contain TCB nodes. ``parse_program(..., allow_tcb=True)``
additionally reads the ``#(...)`` forms that :func:`pretty` emits for runtime
terms; that mode is for tests and tooling, not for user programs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Union

from ..lattice import TWO_POINT, LatticeSpec
from .terms import (
    BOTTOM,
    DIVERGE,
    FLAVORS,
    HOLE,
    LABEL_OPS,
    UNIT,
    App,
    Bag,
    Bind,
    BoolLit,
    CopyRef,
    Downgrade,
    Fix,
    Fork,
    GetLabel,
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
)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        super().__init__(f"{line}:{col}: {msg}" if line else msg)


@dataclass
class Atom:
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: list
    line: int
    col: int
    tcb: bool = False


SExpr = Union[Atom, SList]

SPECIAL_ATOMS = {"<diverge>": DIVERGE, "<bottom>": BOTTOM, "<hole>": HOLE}


def read_sexprs(src: str) -> List[SExpr]:
    stack: List[SList] = [SList([], 0, 0)]
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c.isspace():
            i, col = i + 1, col + 1
            continue
        if c == ";":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c == "(" or (c == "#" and src.startswith("#(", i)):
            tcb = c == "#"
            stack.append(SList([], line, col, tcb))
            step = 2 if tcb else 1
            i, col = i + step, col + step
            continue
        if c == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            stack[-1].items.append(done)
            i, col = i + 1, col + 1
            continue
        j = i
        while j < n and not src[j].isspace() and src[j] not in "();":
            j += 1
        stack[-1].items.append(Atom(src[i:j], line, col))
        col += j - i
        i = j
    if len(stack) != 1:
        open_ = stack[-1]
        raise ParseError("unclosed '('", open_.line, open_.col)
    return stack[0].items


def _is_ident(s: str) -> bool:
    return bool(s) and (s[0].isalpha() or s[0] == "_") and all(ch.isalnum() or ch in "_'" for ch in s)


class _Reader:
    def __init__(self, lattice: LatticeSpec, allow_tcb: bool):
        self.lattice = lattice
        self.allow_tcb = allow_tcb

    def err(self, msg: str, at: SExpr) -> ParseError:
        return ParseError(msg, at.line, at.col)

    def ident(self, x: SExpr) -> str:
        if not isinstance(x, Atom) or not _is_ident(x.text):
            raise self.err("expected identifier", x)
        return x.text

    def label_name(self, x: SExpr):
        if not isinstance(x, Atom) or not self.lattice.has(x.text):
            raise self.err(f"expected a label of lattice {self.lattice.name!r}", x)
        return self.lattice.label(x.text)

    def flavor(self, x: SExpr) -> str:
        if not isinstance(x, Atom) or x.text not in FLAVORS:
            raise self.err("expected reference flavor 'fi' or 'fs'", x)
        return x.text

    def term(self, x: SExpr) -> Term:
        if isinstance(x, Atom):
            if x.text in SPECIAL_ATOMS:
                if not self.allow_tcb:
                    raise self.err(f"TCB term {x.text} is not allowed in programs", x)
                return SPECIAL_ATOMS[x.text]
            if self.lattice.has(x.text):
                return LabelLit(self.lattice.label(x.text))
            return Var(self.ident(x))
        if x.tcb:
            if not self.allow_tcb:
                raise self.err("TCB terms '#(...)' are not allowed in programs", x)
            return self.tcb_form(x)
        if not x.items:
            raise self.err("empty form", x)
        head = x.items[0]
        if not isinstance(head, Atom):
            raise self.err("form head must be a keyword", head)
        args = x.items[1:]
        fn = _FORMS.get(head.text)
        if fn is None:
            raise self.err(f"unknown form {head.text!r}", head)
        return fn(self, x, args)

    def arity(self, x: SList, args, n: int, name: str):
        if len(args) != n:
            raise self.err(f"{name} expects {n} argument(s), got {len(args)}", x)

    def tcb_form(self, x: SList) -> Term:
        head = x.items[0] if x.items else None
        if not isinstance(head, Atom):
            raise self.err("malformed TCB form", x)
        a = x.items[1:]
        h = head.text
        if h == "LIO" and len(a) == 1:
            return LIOv(self.term(a[0]))
        if h == "Lb" and len(a) == 2:
            return Lb(self.label_name(a[0]), self.term(a[1]))
        if h == "Ref" and len(a) == 3 and isinstance(a[0], Atom) and a[0].text == "fi":
            return RefFI(self.label_name(a[1]), self.addr(a[2]))
        if h == "Ref" and len(a) == 2 and isinstance(a[0], Atom) and a[0].text == "fs":
            return RefFS(self.addr(a[1]))
        if h == "WrapRef" and len(a) == 1:
            return WrapRef(self.term(a[0]))
        if h == "unwrap" and len(a) == 1:
            return Unwrap(self.term(a[0]))
        raise self.err(f"unknown TCB form {h!r}", x)

    def addr(self, x: SExpr) -> int:
        if not isinstance(x, Atom) or not x.text.isdigit():
            raise self.err("expected address", x)
        return int(x.text)

    def params(self, x: SExpr) -> List[str]:
        if isinstance(x, SList) and not x.tcb:
            if not x.items:
                raise self.err("empty parameter list", x)
            return [self.ident(p) for p in x.items]
        return [self.ident(x)]

    def do_block(self, x: SList, args) -> Term:
        if not args:
            raise self.err("empty do-block", x)
        stmts = []
        for s in args:
            if (
                isinstance(s, SList)
                and not s.tcb
                and len(s.items) == 3
                and isinstance(s.items[1], Atom)
                and s.items[1].text == "<-"
            ):
                stmts.append((self.ident(s.items[0]), self.term(s.items[2]), s))
            else:
                stmts.append((None, self.term(s), s))
        name, last, at = stmts[-1]
        if name is not None:
            raise self.err("a do-block must end with an expression", at)
        out = last
        for name, m, _ in reversed(stmts[:-1]):
            out = Bind(m, Lam(name or "_", out))
        return out


def _lam(r: _Reader, x, a):
    r.arity(x, a, 2, "lam")
    body = r.term(a[1])
    for p in reversed(r.params(a[0])):
        body = Lam(p, body)
    return body


def _app(r: _Reader, x, a):
    if len(a) < 2:
        raise r.err("app expects a function and at least one argument", x)
    out = r.term(a[0])
    for arg in a[1:]:
        out = App(out, r.term(arg))
    return out


def _bool(r: _Reader, x, a):
    r.arity(x, a, 1, "bool")
    if not isinstance(a[0], Atom) or a[0].text not in ("true", "false"):
        raise r.err("bool expects 'true' or 'false'", a[0])
    return BoolLit(a[0].text == "true")


def _var(r: _Reader, x, a):
    r.arity(x, a, 1, "var")
    return Var(r.ident(a[0]))


def _lop(r: _Reader, x, a):
    r.arity(x, a, 3, "lop")
    if not isinstance(a[0], Atom) or a[0].text not in LABEL_OPS:
        raise r.err("lop expects join, meet or flows", a[0])
    return LabelOp(a[0].text, r.term(a[1]), r.term(a[2]))


def _seq(r: _Reader, x, a):
    if not a:
        raise r.err("empty seq", x)
    ts = [r.term(t) for t in a]
    out = ts[-1]
    for t in reversed(ts[:-1]):
        out = Bind(t, Lam("_", out))
    return out


def _fixed(n: int, name: str, build):
    def f(r: _Reader, x, a):
        r.arity(x, a, n, name)
        return build(r, *a)

    return f


def _flavored(n: int, name: str, build):
    def f(r: _Reader, x, a):
        r.arity(x, a, n + 1, name)
        return build(r, r.flavor(a[0]), *a[1:])

    return f


def _label_arg(r: _Reader, x: SExpr) -> Term:
    return r.term(x)


_FORMS = {
    "lam": _lam,
    "app": _app,
    "$": _app,
    "fix": _fixed(1, "fix", lambda r, t: Fix(r.term(t))),
    "if": _fixed(3, "if", lambda r, c, t, e: If(r.term(c), r.term(t), r.term(e))),
    "when": _fixed(2, "when", lambda r, c, t: If(r.term(c), r.term(t), Return(UNIT))),
    "not": _fixed(1, "not", lambda r, c: If(r.term(c), BoolLit(False), BoolLit(True))),
    "bool": _bool,
    "unit": _fixed(0, "unit", lambda r: UNIT),
    "var": _var,
    "lop": _lop,
    "return": _fixed(1, "return", lambda r, t: Return(r.term(t))),
    "bind": _fixed(2, "bind", lambda r, m, k: Bind(r.term(m), r.term(k))),
    "do": lambda r, x, a: r.do_block(x, a),
    "seq": _seq,
    "getLabel": _fixed(0, "getLabel", lambda r: GetLabel()),
    "label": _fixed(2, "label", lambda r, l, t: LabelTerm(_label_arg(r, l), r.term(t))),
    "unlabel": _fixed(1, "unlabel", lambda r, t: Unlabel(r.term(t))),
    "labelOf": _fixed(1, "labelOf", lambda r, t: LabelOf(r.term(t))),
    "toLabeled": _fixed(2, "toLabeled", lambda r, l, t: ToLabeled(_label_arg(r, l), r.term(t))),
    "newRef": _flavored(2, "newRef", lambda r, s, l, t: NewRef(s, _label_arg(r, l), r.term(t))),
    "readRef": _flavored(1, "readRef", lambda r, s, t: ReadRef(s, r.term(t))),
    "writeRef": _flavored(2, "writeRef", lambda r, s, t, u: WriteRef(s, r.term(t), r.term(u))),
    "labelOfRef": _flavored(1, "labelOfRef", lambda r, s, t: LabelOfRef(s, r.term(t))),
    "copyRef": _fixed(2, "copyRef", lambda r, a, b: CopyRef(r.term(a), r.term(b))),
    "upgrade": _fixed(2, "upgrade", lambda r, t, l: Upgrade(r.term(t), _label_arg(r, l))),
    "downgrade": _fixed(2, "downgrade", lambda r, t, l: Downgrade(r.term(t), _label_arg(r, l))),
    "withRefs": _fixed(2, "withRefs", lambda r, v, t: WithRefs(r.term(v), r.term(t))),
    "fork": _fixed(1, "fork", lambda r, t: Fork(r.term(t))),
    "bag": lambda r, x, a: Bag(tuple(r.term(t) for t in a)),
}

KEYWORDS = frozenset(_FORMS)


def parse_program(source: str, lattice: Optional[LatticeSpec] = None, allow_tcb: bool = False) -> Term:
    """Parse exactly one term."""
    exprs = read_sexprs(source)
    if not exprs:
        raise ParseError("empty program", 1, 1)
    if len(exprs) > 1:
        extra = exprs[1]
        raise ParseError("trailing input after program", extra.line, extra.col)
    return _Reader(lattice or TWO_POINT, allow_tcb).term(exprs[0])


def parse_file(path, lattice: Optional[LatticeSpec] = None) -> Term:
    with open(path) as fh:
        return parse_program(fh.read(), lattice)
