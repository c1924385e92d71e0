"""Simple types with unification-based inference.

Lambdas carry no annotations, so types are inferred. There is no
let-polymorphism: every binder is monomorphic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

from .terms import (
    FI,
    FS,
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


class TypeCheckError(Exception):
    pass


class Type:
    pass


@dataclass(frozen=True)
class TBool(Type):
    def __str__(self):
        return "Bool"


@dataclass(frozen=True)
class TUnit(Type):
    def __str__(self):
        return "()"


@dataclass(frozen=True)
class TLabel(Type):
    def __str__(self):
        return "Label"


@dataclass(frozen=True)
class TArrow(Type):
    dom: Type
    cod: Type

    def __str__(self):
        d = f"({self.dom})" if isinstance(self.dom, TArrow) else str(self.dom)
        return f"{d} -> {self.cod}"


@dataclass(frozen=True)
class TLIO(Type):
    arg: Type

    def __str__(self):
        return f"LIO {_atomic(self.arg)}"


@dataclass(frozen=True)
class TLabeled(Type):
    arg: Type

    def __str__(self):
        return f"Labeled {_atomic(self.arg)}"


@dataclass(frozen=True)
class TRef(Type):
    flavor: str
    arg: Type

    def __str__(self):
        return f"Ref_{self.flavor} {_atomic(self.arg)}"


@dataclass(frozen=True)
class TBag(Type):
    items: Tuple[Type, ...]

    def __str__(self):
        return "<" + ", ".join(map(str, self.items)) + ">"


@dataclass(frozen=True)
class TVar(Type):
    n: int

    def __str__(self):
        return f"t{self.n}"


def _atomic(t: Type) -> str:
    s = str(t)
    return f"({s})" if " " in s and not isinstance(t, TBag) else s


BOOL, UNIT_T, LABEL_T = TBool(), TUnit(), TLabel()

Delta = Mapping[Tuple[str, int], Type]


class Unifier:
    def __init__(self):
        self.sub: Dict[int, Type] = {}
        self._ids = itertools.count()

    def fresh(self) -> TVar:
        return TVar(next(self._ids))

    def walk(self, t: Type) -> Type:
        while isinstance(t, TVar) and t.n in self.sub:
            t = self.sub[t.n]
        return t

    def zonk(self, t: Type) -> Type:
        t = self.walk(t)
        if isinstance(t, TArrow):
            return TArrow(self.zonk(t.dom), self.zonk(t.cod))
        if isinstance(t, TLIO):
            return TLIO(self.zonk(t.arg))
        if isinstance(t, TLabeled):
            return TLabeled(self.zonk(t.arg))
        if isinstance(t, TRef):
            return TRef(t.flavor, self.zonk(t.arg))
        if isinstance(t, TBag):
            return TBag(tuple(self.zonk(x) for x in t.items))
        return t

    def occurs(self, n: int, t: Type) -> bool:
        t = self.walk(t)
        if isinstance(t, TVar):
            return t.n == n
        return any(self.occurs(n, c) for c in _parts(t))

    def unify(self, a: Type, b: Type, where: str = "") -> None:
        a, b = self.walk(a), self.walk(b)
        if a == b:
            return
        if isinstance(a, TVar):
            if self.occurs(a.n, b):
                raise TypeCheckError(f"infinite type {self.zonk(a)} ~ {self.zonk(b)}{where}")
            self.sub[a.n] = b
            return
        if isinstance(b, TVar):
            self.unify(b, a, where)
            return
        if type(a) is not type(b):
            raise TypeCheckError(f"type mismatch: {self.zonk(a)} vs {self.zonk(b)}{where}")
        if isinstance(a, TRef) and a.flavor != b.flavor:
            raise TypeCheckError(f"reference flavor mismatch: {self.zonk(a)} vs {self.zonk(b)}{where}")
        pa, pb = _parts(a), _parts(b)
        if len(pa) != len(pb):
            raise TypeCheckError(f"type mismatch: {self.zonk(a)} vs {self.zonk(b)}{where}")
        for x, y in zip(pa, pb):
            self.unify(x, y, where)


def _parts(t: Type):
    if isinstance(t, TArrow):
        return (t.dom, t.cod)
    if isinstance(t, (TLIO, TLabeled, TRef)):
        return (t.arg,)
    if isinstance(t, TBag):
        return t.items
    return ()


class _Checker:
    def __init__(self, u: Unifier):
        self.u = u

    def at(self, t: Term) -> str:
        from .pretty import pretty, truncate

        return f" in {truncate(pretty(t), 80)}"

    def expect(self, got: Type, want: Type, t: Term) -> None:
        self.u.unify(got, want, self.at(t))

    def infer(self, t: Term, gamma: Mapping[str, Type], delta: Delta, hidden: frozenset) -> Type:
        u = self.u
        go = lambda x, g=gamma, d=delta, h=hidden: self.infer(x, g, d, h)  # noqa: E731
        if isinstance(t, Var):
            if t.name not in gamma:
                raise TypeCheckError(f"unbound variable {t.name}")
            return gamma[t.name]
        if isinstance(t, Lam):
            a = u.fresh()
            b = self.infer(t.body, {**gamma, t.var: a}, delta, hidden)
            return TArrow(a, b)
        if isinstance(t, App):
            f, a, r = go(t.fn), go(t.arg), u.fresh()
            self.expect(f, TArrow(a, r), t)
            return r
        if isinstance(t, Fix):
            a = u.fresh()
            self.expect(go(t.fn), TArrow(a, a), t)
            return a
        if isinstance(t, If):
            self.expect(go(t.cond), BOOL, t)
            a = go(t.then)
            self.expect(go(t.els), a, t)
            return a
        if isinstance(t, BoolLit):
            return BOOL
        if isinstance(t, UnitLit):
            return UNIT_T
        if isinstance(t, LabelLit):
            return LABEL_T
        if isinstance(t, LabelOp):
            self.expect(go(t.left), LABEL_T, t)
            self.expect(go(t.right), LABEL_T, t)
            return BOOL if t.op == "flows" else LABEL_T
        if isinstance(t, Return):
            return TLIO(go(t.body))
        if isinstance(t, Bind):
            a, b = u.fresh(), u.fresh()
            self.expect(go(t.m), TLIO(a), t)
            self.expect(go(t.k), TArrow(a, TLIO(b)), t)
            return TLIO(b)
        if isinstance(t, GetLabel):
            return TLIO(LABEL_T)
        if isinstance(t, LabelTerm):
            self.expect(go(t.lbl), LABEL_T, t)
            return TLIO(TLabeled(go(t.body)))
        if isinstance(t, Unlabel):
            a = u.fresh()
            self.expect(go(t.body), TLabeled(a), t)
            return TLIO(a)
        if isinstance(t, LabelOf):
            self.expect(go(t.body), TLabeled(u.fresh()), t)
            return LABEL_T
        if isinstance(t, ToLabeled):
            a = u.fresh()
            self.expect(go(t.lbl), LABEL_T, t)
            self.expect(go(t.body), TLIO(a), t)
            return TLIO(TLabeled(a))
        if isinstance(t, NewRef):
            self.expect(go(t.lbl), LABEL_T, t)
            return TLIO(TRef(t.flavor, go(t.body)))
        if isinstance(t, ReadRef):
            a = u.fresh()
            self.expect(go(t.ref), TRef(t.flavor, a), t)
            return TLIO(a)
        if isinstance(t, WriteRef):
            a = u.fresh()
            self.expect(go(t.ref), TRef(t.flavor, a), t)
            self.expect(go(t.body), a, t)
            return TLIO(UNIT_T)
        if isinstance(t, LabelOfRef):
            self.expect(go(t.ref), TRef(t.flavor, u.fresh()), t)
            return LABEL_T if t.flavor == FI else TLIO(LABEL_T)
        if isinstance(t, CopyRef):
            a = u.fresh()
            self.expect(go(t.src), TRef(FI, a), t)
            self.expect(go(t.dst), TRef(FI, a), t)
            return TLIO(UNIT_T)
        if isinstance(t, (Upgrade, Downgrade)):
            self.expect(go(t.ref), TRef(FS, u.fresh()), t)
            self.expect(go(t.lbl), LABEL_T, t)
            return TLIO(UNIT_T)
        if isinstance(t, Bag):
            out = []
            for x in t.items:
                a = u.fresh()
                self.expect(go(x), TRef(FS, a), x)
                out.append(TRef(FS, a))
            return TBag(tuple(out))
        if isinstance(t, WithRefs):
            bt = go(t.bag)
            if not isinstance(u.walk(bt), TBag):
                raise TypeCheckError(f"withRefs expects a bag{self.at(t)}")
            keep = _bag_addrs(t.bag)
            inner = {k: v for k, v in delta.items() if k[0] == FI or k[1] in keep}
            gone = hidden | frozenset(k[1] for k in delta if k[0] == FS and k[1] not in keep)
            a = u.fresh()
            self.expect(self.infer(t.body, gamma, inner, gone), TLIO(a), t)
            return TLIO(a)
        if isinstance(t, Fork):
            self.expect(go(t.body), TLIO(u.fresh()), t)
            return TLIO(UNIT_T)
        if isinstance(t, LIOv):
            return TLIO(go(t.body))
        if isinstance(t, Lb):
            return TLabeled(go(t.body))
        if isinstance(t, RefFI):
            return TRef(FI, self.addr(FI, t.addr, delta, hidden))
        if isinstance(t, RefFS):
            return TRef(FS, self.addr(FS, t.addr, delta, hidden))
        if isinstance(t, WrapRef):
            a = u.fresh()
            self.expect(go(t.body), TRef(FI, TRef(FI, a)), t)
            return TRef(FS, a)
        if isinstance(t, Unwrap):
            a = u.fresh()
            self.expect(go(t.body), TRef(FS, a), t)
            return TRef(FI, TRef(FI, a))
        if isinstance(t, (Diverge, Bottom, Hole)):
            return u.fresh()
        raise TypeCheckError(f"cannot type {type(t).__name__}")

    def addr(self, flavor: str, a: int, delta: Delta, hidden: frozenset) -> Type:
        key = (flavor, a)
        if key in delta:
            return delta[key]
        if flavor == FS and a in hidden:
            raise TypeCheckError(f"address {flavor}:{a} is outside the enclosing withRefs bag")
        raise TypeCheckError(f"unbound address {flavor}:{a}")


def _bag_addrs(bag: Term) -> frozenset:
    if isinstance(bag, Bag):
        return frozenset(x.addr for x in bag.items if isinstance(x, RefFS))
    return frozenset()


def typecheck(
    delta: Optional[Delta] = None,
    gamma: Optional[Mapping[str, Type]] = None,
    t: Term = None,
    expected: Optional[Type] = None,
    unifier: Optional[Unifier] = None,
) -> Type:
    """Infer the type of ``t`` under store typing ``delta`` and environment ``gamma``."""
    u = unifier or Unifier()
    ty = _Checker(u).infer(t, dict(gamma or {}), dict(delta or {}), frozenset())
    if expected is not None:
        u.unify(ty, expected, " against the expected type")
    return u.zonk(ty)


def store_typing(mu_fi: Mapping[int, Term], mu_fs: Mapping[int, Term], unifier: Optional[Unifier] = None) -> Dict:
    """Infer Δ from the cells of both stores (cells may refer to each other)."""
    u = unifier or Unifier()
    delta: Dict[Tuple[str, int], Type] = {}
    for a in mu_fi:
        delta[(FI, a)] = u.fresh()
    for a in mu_fs:
        delta[(FS, a)] = u.fresh()
    chk = _Checker(u)
    for a, cell in mu_fi.items():
        if not isinstance(cell, Lb):
            raise TypeCheckError(f"malformed cell fi:{a}")
        u.unify(chk.infer(cell.body, {}, delta, frozenset()), delta[(FI, a)], f" at fi:{a}")
    for a, cell in mu_fs.items():
        if not (isinstance(cell, Lb) and isinstance(cell.body, Lb)):
            raise TypeCheckError(f"malformed cell fs:{a}")
        u.unify(chk.infer(cell.body.body, {}, delta, frozenset()), delta[(FS, a)], f" at fs:{a}")
    return {k: u.zonk(v) for k, v in delta.items()}


def typecheck_config(state, term: Term) -> Type:
    """Type of a whole configuration: store typing first, then the term."""
    u = Unifier()
    delta = store_typing(state.mu_fi, state.mu_fs, u)
    return typecheck(delta, {}, term, unifier=u)
