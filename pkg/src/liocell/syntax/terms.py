"""Abstract syntax of the calculus family, including TCB-only runtime nodes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, fields
from typing import Callable, ClassVar, FrozenSet, Iterator, Tuple

from ..lattice import Label

FI = "fi"
FS = "fs"
FLAVORS = (FI, FS)
LABEL_OPS = ("join", "meet", "flows")


class Term:
    """Base class. Subclasses list their term-valued fields in ``_kids``."""

    _kids: ClassVar[Tuple[str, ...]] = ()
    tcb: ClassVar[bool] = False

    def children(self) -> Iterator["Term"]:
        for name in self._kids:
            v = getattr(self, name)
            if isinstance(v, tuple):
                yield from v
            else:
                yield v

    def map_kids(self, f: Callable[["Term"], "Term"]) -> "Term":
        if not self._kids:
            return self
        vals = []
        changed = False
        for fd in fields(self):
            v = getattr(self, fd.name)
            if fd.name in self._kids:
                if isinstance(v, tuple):
                    nv = tuple(f(x) for x in v)
                    if any(a is not b for a, b in zip(nv, v)):
                        changed = True
                else:
                    nv = f(v)
                    if nv is not v:
                        changed = True
                v = nv
            vals.append(v)
        return type(self)(*vals) if changed else self


def _node(*kids: str, tcb: bool = False):
    def deco(cls):
        cls = dataclass(frozen=True)(cls)
        cls._kids = kids
        cls.tcb = tcb
        return cls

    return deco


# -- base calculus ---------------------------------------------------------------


@_node()
class Var(Term):
    name: str


@_node("body")
class Lam(Term):
    var: str
    body: Term


@_node("fn", "arg")
class App(Term):
    fn: Term
    arg: Term


@_node("fn")
class Fix(Term):
    fn: Term


@_node("cond", "then", "els")
class If(Term):
    cond: Term
    then: Term
    els: Term


@_node()
class BoolLit(Term):
    value: bool


@_node()
class UnitLit(Term):
    pass


@_node()
class LabelLit(Term):
    label: Label


@_node("left", "right")
class LabelOp(Term):
    op: str
    left: Term
    right: Term


@_node("body")
class Return(Term):
    body: Term


@_node("m", "k")
class Bind(Term):
    m: Term
    k: Term


@_node()
class GetLabel(Term):
    pass


# -- labeled values ----------------------------------------------------------------


@_node("lbl", "body")
class LabelTerm(Term):
    """``label l t``."""

    lbl: Term
    body: Term


@_node("body")
class Unlabel(Term):
    body: Term


@_node("body")
class LabelOf(Term):
    body: Term


@_node("lbl", "body")
class ToLabeled(Term):
    lbl: Term
    body: Term


# -- references ---------------------------------------------------------------------


@_node("lbl", "body")
class NewRef(Term):
    flavor: str
    lbl: Term
    body: Term


@_node("ref")
class ReadRef(Term):
    flavor: str
    ref: Term


@_node("ref", "body")
class WriteRef(Term):
    flavor: str
    ref: Term
    body: Term


@_node("ref")
class LabelOfRef(Term):
    flavor: str
    ref: Term


@_node("src", "dst")
class CopyRef(Term):
    src: Term
    dst: Term


@_node("ref", "lbl")
class Upgrade(Term):
    ref: Term
    lbl: Term


@_node("ref", "lbl")
class Downgrade(Term):
    ref: Term
    lbl: Term


@_node("bag", "body")
class WithRefs(Term):
    bag: Term
    body: Term


@_node("body")
class Fork(Term):
    body: Term


@_node("items")
class Bag(Term):
    items: Tuple[Term, ...] = ()


# -- TCB-only runtime nodes ---------------------------------------------------------


@_node("body", tcb=True)
class LIOv(Term):
    """``LIO^TCB t``: a finished monadic computation."""

    body: Term


@_node("body", tcb=True)
class Lb(Term):
    label: Label
    body: Term


@_node(tcb=True)
class RefFI(Term):
    label: Label
    addr: int


@_node(tcb=True)
class RefFS(Term):
    addr: int


@_node("body", tcb=True)
class WrapRef(Term):
    body: Term


@_node("body", tcb=True)
class Unwrap(Term):
    body: Term


@_node(tcb=True)
class Diverge(Term):
    pass


@_node(tcb=True)
class Bottom(Term):
    pass


@_node(tcb=True)
class Hole(Term):
    """The erasure marker."""


DIVERGE = Diverge()
BOTTOM = Bottom()
HOLE = Hole()
UNIT = UnitLit()
TRUE = BoolLit(True)
FALSE = BoolLit(False)


# -- generic queries ---------------------------------------------------------------------


def subterms(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        x = stack.pop()
        yield x
        stack.extend(reversed(list(x.children())))


def size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


def is_value(t: Term) -> bool:
    if isinstance(t, (Lam, BoolLit, UnitLit, LabelLit, LIOv, Lb, RefFI, RefFS, Bottom)):
        return True
    if isinstance(t, WrapRef):
        return is_value(t.body)
    if isinstance(t, Bag):
        return all(is_value(x) for x in t.items)
    return False


def has_tcb(t: Term) -> bool:
    return any(x.tcb for x in subterms(t))


def free_vars(t: Term) -> FrozenSet[str]:
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Lam):
        return free_vars(t.body) - {t.var}
    out: FrozenSet[str] = frozenset()
    for c in t.children():
        out = out | free_vars(c)
    return out


def all_names(t: Term) -> FrozenSet[str]:
    out = set()
    for x in subterms(t):
        if isinstance(x, Var):
            out.add(x.name)
        elif isinstance(x, Lam):
            out.add(x.var)
    return frozenset(out)


_fresh = itertools.count(1)


def fresh_name(base: str, avoid) -> str:
    """A name not in ``avoid``, drawn from the global counter."""
    stem = base.split("'")[0] or "x"
    while True:
        cand = f"{stem}'{next(_fresh)}"
        if cand not in avoid:
            return cand


def subst(t: Term, x: str, v: Term) -> Term:
    """Capture-avoiding ``{v/x} t``."""
    fv = free_vars(v)
    return _subst(t, x, v, fv)


def _subst(t: Term, x: str, v: Term, fv: FrozenSet[str]) -> Term:
    if isinstance(t, Var):
        return v if t.name == x else t
    if isinstance(t, Lam):
        if t.var == x:
            return t
        if t.var in fv:
            y = fresh_name(t.var, fv | free_vars(t.body) | {x})
            body = _subst(t.body, t.var, Var(y), frozenset((y,)))
            return Lam(y, _subst(body, x, v, fv))
        return Lam(t.var, _subst(t.body, x, v, fv))
    if not t._kids:
        return t
    return t.map_kids(lambda c: _subst(c, x, v, fv))


def alpha_normalize(t: Term) -> Term:
    """Rename bound variables canonically by binding depth."""

    def go(t: Term, env: dict, depth: int) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name))
        if isinstance(t, Lam):
            name = f"%{depth}"
            return Lam(name, go(t.body, {**env, t.var: name}, depth + 1))
        if not t._kids:
            return t
        return t.map_kids(lambda c: go(c, env, depth))

    return go(t, {}, 0)


def alpha_equiv(a: Term, b: Term) -> bool:
    return alpha_normalize(a) == alpha_normalize(b)


def transform(t: Term, f: Callable[[Term], Term]) -> Term:
    """Bottom-up rewrite."""
    return f(t.map_kids(lambda c: transform(c, f)))


def fold_pure(t: Term) -> Term:
    """Reduce closed pure redexes on literals: label operations, label queries, ``if`` on a literal.

    Beta redexes are left alone, so this always terminates.
    """

    def f(x: Term) -> Term:
        if isinstance(x, LabelOp) and isinstance(x.left, LabelLit) and isinstance(x.right, LabelLit):
            a, b = x.left.label, x.right.label
            if x.op == "flows":
                return BoolLit(a <= b)
            return LabelLit(a | b if x.op == "join" else a & b)
        if isinstance(x, LabelOf) and isinstance(x.body, Lb):
            return LabelLit(x.body.label)
        if isinstance(x, LabelOfRef) and x.flavor == FI and isinstance(x.ref, RefFI):
            return LabelLit(x.ref.label)
        if isinstance(x, If) and isinstance(x.cond, BoolLit):
            return x.then if x.cond.value else x.els
        return x

    return transform(t, f)


def ref_fs_addrs(t: Term) -> FrozenSet[int]:
    return frozenset(x.addr for x in subterms(t) if isinstance(x, RefFS))


# -- small builders ---------------------------------------------------------------------------


def lam(params, body: Term) -> Term:
    if isinstance(params, str):
        params = params.split()
    for p in reversed(list(params)):
        body = Lam(p, body)
    return body


def app(f: Term, *args: Term) -> Term:
    for a in args:
        f = App(f, a)
    return f


def seq(*ts: Term) -> Term:
    """``t1 >> t2 >> ...`` with a discard binder that is never referenced."""
    out = ts[-1]
    for t in reversed(ts[:-1]):
        out = Bind(t, Lam("_", out))
    return out


def do(*stmts) -> Term:
    """Build a do-block. Statements are terms or ``(name, term)`` bindings."""
    *init, last = stmts
    if isinstance(last, tuple):
        raise ValueError("a do-block must end with an expression")
    out = last
    for s in reversed(init):
        if isinstance(s, tuple):
            name, m = s
            out = Bind(m, Lam(name, out))
        else:
            out = Bind(s, Lam("_", out))
    return out


def when(c: Term, t: Term) -> Term:
    return If(c, t, Return(UNIT))


def not_(c: Term) -> Term:
    return If(c, FALSE, TRUE)
