"""Printing terms back to the s-expression syntax."""

from __future__ import annotations

from ..lattice import get_lattice
from .terms import (
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
    UnitLit,
    Unlabel,
    Unwrap,
    Upgrade,
    Var,
    WithRefs,
    WrapRef,
    WriteRef,
)


def _var(name: str, labels) -> str:
    return f"(var {name})" if name in labels else name


def pretty(t: Term, labels=frozenset({"L", "H", "P"})) -> str:
    """Render ``t``. ``labels`` lists names that must not print as bare variables."""
    out: list = []
    _emit(t, out, labels)
    return "".join(out)


def _emit(t: Term, out: list, labels) -> None:
    w = out.append
    if isinstance(t, Var):
        w(_var(t.name, labels))
    elif isinstance(t, LabelLit):
        w(t.label.name)
    elif isinstance(t, BoolLit):
        w("(bool true)" if t.value else "(bool false)")
    elif isinstance(t, UnitLit):
        w("(unit)")
    elif isinstance(t, GetLabel):
        w("(getLabel)")
    elif isinstance(t, Lam):
        w(f"(lam {t.var} ")
        _emit(t.body, out, labels)
        w(")")
    elif isinstance(t, LabelOp):
        w(f"(lop {t.op} ")
        _emit(t.left, out, labels)
        w(" ")
        _emit(t.right, out, labels)
        w(")")
    elif isinstance(t, (NewRef, ReadRef, WriteRef, LabelOfRef)):
        w(f"({_HEADS[type(t)]} {t.flavor}")
        for c in t.children():
            w(" ")
            _emit(c, out, labels)
        w(")")
    elif isinstance(t, Lb):
        w(f"#(Lb {t.label.name} ")
        _emit(t.body, out, labels)
        w(")")
    elif isinstance(t, RefFI):
        w(f"#(Ref fi {t.label.name} {t.addr})")
    elif isinstance(t, RefFS):
        w(f"#(Ref fs {t.addr})")
    elif isinstance(t, Diverge):
        w("<diverge>")
    elif isinstance(t, Bottom):
        w("<bottom>")
    elif isinstance(t, Hole):
        w("<hole>")
    elif isinstance(t, Bag):
        w("(bag")
        for c in t.items:
            w(" ")
            _emit(c, out, labels)
        w(")")
    else:
        head = _HEADS[type(t)]
        w(head)
        for c in t.children():
            w(" ")
            _emit(c, out, labels)
        w(")")


_HEADS = {
    App: "(app",
    Fix: "(fix",
    If: "(if",
    Return: "(return",
    Bind: "(bind",
    LabelTerm: "(label",
    Unlabel: "(unlabel",
    LabelOf: "(labelOf",
    ToLabeled: "(toLabeled",
    NewRef: "newRef",
    ReadRef: "readRef",
    WriteRef: "writeRef",
    LabelOfRef: "labelOfRef",
    CopyRef: "(copyRef",
    Upgrade: "(upgrade",
    Downgrade: "(downgrade",
    WithRefs: "(withRefs",
    Fork: "(fork",
    LIOv: "#(LIO",
    WrapRef: "#(WrapRef",
    Unwrap: "#(unwrap",
}


def pretty_for(t: Term, lattice_name: str) -> str:
    return pretty(t, frozenset(get_lattice(lattice_name).names))


def truncate(s: str, n: int = 120) -> str:
    return s if len(s) <= n else s[: n - 3] + "..."
