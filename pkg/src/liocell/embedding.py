"""Translation of flow-sensitive programs into the flow-insensitive calculus.

An FS reference becomes an FI reference (the outer cell, labeled with the
label on the label) that points to another FI reference (the inner cell,
labeled with the current data label). FS primitives expand into short LIO
programs over these pairs; everything else is translated homomorphically.

:func:`cosimulate` runs a program both ways and compares the results.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from .machine import (
    Configuration,
    Diverged,
    Engine,
    FuelExhausted,
    MachineState,
    MonitorError,
    Outcome,
    Value,
    VariantConfig,
    describe,
)
from .syntax.terms import (
    BOTTOM,
    DIVERGE,
    FI,
    FS,
    UNIT,
    Bag,
    Bind,
    Bottom,
    CopyRef,
    Diverge,
    Downgrade,
    GetLabel,
    If,
    Lam,
    LabelOfRef,
    LabelOp,
    Lb,
    NewRef,
    ReadRef,
    RefFI,
    RefFS,
    Return,
    Term,
    ToLabeled,
    Unwrap,
    Upgrade,
    Var,
    WithRefs,
    WrapRef,
    WriteRef,
    all_names,
    alpha_normalize,
    do,
    fold_pure,
    subterms,
    transform,
)


class EmbeddingError(ValueError):
    pass


FS_NODES = (Upgrade, Downgrade, WithRefs, RefFS)


def has_fs_syntax(t: Term) -> bool:
    for x in subterms(t):
        if isinstance(x, FS_NODES):
            return True
        if isinstance(x, (NewRef, ReadRef, WriteRef, LabelOfRef)) and x.flavor == FS:
            return True
    return False


class _Names:
    """Deterministic fresh binders that avoid every name of the translated program."""

    def __init__(self, avoid):
        self.avoid = set(avoid)
        self.n = 0

    def __call__(self, base: str) -> str:
        while True:
            self.n += 1
            cand = f"{base}'{self.n}"
            if cand not in self.avoid:
                self.avoid.add(cand)
                return cand


@dataclass
class Renaming:
    """Where FS-world addresses live in the FI world.

    ``fi`` maps FS-world FI addresses to FI-world addresses, ``fs`` maps FS
    addresses to the FI-world outer cell, ``outer`` gives each FS address its
    label on the label.
    """

    fi: Dict[int, int] = field(default_factory=dict)
    fs: Dict[int, int] = field(default_factory=dict)
    outer: Dict[int, object] = field(default_factory=dict)

    @classmethod
    def identity(cls, sigma: MachineState) -> "Renaming":
        return cls(
            {a: a for a in sigma.mu_fi},
            {a: a for a in sigma.mu_fs},
            {a: c.label for a, c in sigma.mu_fs.items()},
        )


class _Embedder:
    def __init__(self, ren: Renaming, names: _Names):
        self.ren = ren
        self.fresh = names

    def ref(self, r: Term) -> Term:
        return Unwrap(self.go(r))

    def go(self, t: Term) -> Term:
        if isinstance(t, RefFS):
            if t.addr not in self.ren.fs:
                raise EmbeddingError(f"fs:{t.addr} is not in the store the translation was taken against")
            return WrapRef(RefFI(self.ren.outer[t.addr], self.ren.fs[t.addr]))
        if isinstance(t, RefFI):
            return RefFI(t.label, self.ren.fi.get(t.addr, t.addr))
        if isinstance(t, NewRef) and t.flavor == FS:
            i, lc, o = self.fresh("i"), self.fresh("lc"), self.fresh("o")
            return do(
                (i, NewRef(FI, self.go(t.lbl), self.go(t.body))),
                (lc, GetLabel()),
                (o, NewRef(FI, Var(lc), Var(i))),
                Return(WrapRef(Var(o))),
            )
        if isinstance(t, ReadRef) and t.flavor == FS:
            x = self.fresh("x")
            return Bind(ReadRef(FI, self.ref(t.ref)), Lam(x, ReadRef(FI, Var(x))))
        if isinstance(t, LabelOfRef) and t.flavor == FS:
            x = self.fresh("x")
            return Bind(ReadRef(FI, self.ref(t.ref)), Lam(x, Return(LabelOfRef(FI, Var(x)))))
        if isinstance(t, WriteRef) and t.flavor == FS:
            lc, i, lc2 = self.fresh("lc"), self.fresh("i"), self.fresh("lc")
            r = self.go(t.ref)
            guard = LabelOp("flows", Var(lc2), LabelOfRef(FI, Var(i)))
            block = do(
                (i, ReadRef(FI, Unwrap(r))),
                (lc2, GetLabel()),
                If(guard, WriteRef(FI, Var(i), self.go(t.body)), DIVERGE),
            )
            return do(
                (lc, GetLabel()),
                ToLabeled(LabelOp("join", Var(lc), LabelOfRef(FI, Unwrap(r))), block),
                Return(UNIT),
            )
        if isinstance(t, (Upgrade, Downgrade)):
            up = isinstance(t, Upgrade)
            lc, i, cur, n = self.fresh("lc"), self.fresh("i"), self.fresh("lcur"), self.fresh("n")
            r = self.go(t.ref)
            op = "join" if up else "meet"
            target = LabelOp("join", Var(cur), LabelOp(op, self.go(t.lbl), LabelOfRef(FI, Var(i))))
            stmts = [
                (i, ReadRef(FI, Unwrap(r))),
                (cur, GetLabel()),
                (n, NewRef(FI, target, BOTTOM)),
            ]
            if up:
                stmts.append(CopyRef(Var(i), Var(n)))
            stmts.append(WriteRef(FI, Unwrap(r), Var(n)))
            return do(
                (lc, GetLabel()),
                ToLabeled(LabelOp("join", Var(lc), LabelOfRef(FI, Unwrap(r))), do(*stmts)),
                Return(UNIT),
            )
        if isinstance(t, WithRefs):
            return self.go(t.body)
        if not t._kids:
            return t
        return t.map_kids(self.go)


def _names_of(t: Term, sigma: Optional[MachineState]) -> set:
    names = set(all_names(t))
    if sigma is not None:
        for c in [*sigma.mu_fi.values(), *sigma.mu_fs.values()]:
            names |= all_names(c)
    return names


def embed_term(t: Term, sigma: MachineState, renaming: Optional[Renaming] = None) -> Term:
    """Translate ``t`` against the snapshot ``sigma``."""
    ren = renaming or Renaming.identity(sigma)
    return _Embedder(ren, _Names(_names_of(t, sigma))).go(t)


def embed_state(sigma: MachineState, mode: Optional[VariantConfig] = None) -> MachineState:
    """FI-only state: each FS cell becomes an outer cell at the same address plus a fresh inner cell."""
    ren = Renaming.identity(sigma)
    emb = _Embedder(ren, _Names(_names_of(UNIT, sigma)))
    mu = {a: emb.go(c) for a, c in sigma.mu_fi.items()}
    nxt = sigma.next_addr
    for a in sorted(sigma.mu_fs):
        cell = sigma.mu_fs[a]
        inner = cell.body
        b = nxt
        nxt += 1
        mu[a] = Lb(cell.label, RefFI(inner.label, b))
        mu[b] = Lb(inner.label, emb.go(inner.body))
    fi_mode = mode or VariantConfig("fi", "secure", sigma.mode.fuel)
    return MachineState(sigma.lcur, mu, {}, nxt, fi_mode)


# -- co-simulation -----------------------------------------------------------------------


@dataclass
class CoSimReport:
    match: bool
    fs_outcome: Outcome
    fi_outcome: Optional[Outcome]
    embedded: Term
    mismatches: List[str] = field(default_factory=list)
    inconclusive: bool = False

    def summary(self) -> str:
        head = "match" if self.match else ("inconclusive" if self.inconclusive else "MISMATCH")
        lines = [f"{head}: fs={describe(self.fs_outcome)}"]
        if self.fi_outcome is not None:
            lines.append(f"       fi={describe(self.fi_outcome)}")
        lines.extend(f"  - {m}" for m in self.mismatches)
        return "\n".join(lines)


def _norm(t: Term) -> Term:
    # the two divergent placeholders are interchangeable for comparison, and
    # pure label expressions are compared by their value
    return alpha_normalize(fold_pure(transform(t, lambda x: DIVERGE if isinstance(x, Bottom) else x)))


def _build_renaming(sigma: MachineState, fs_events, fi_allocs: List[int], first_fi: int) -> Renaming:
    ren = Renaming.identity(sigma)
    it = iter(fi_allocs)
    for kind, a, st in fs_events:
        if kind == "alloc-fi":
            ren.fi[a] = next(it)
        elif kind == "alloc-fs":
            next(it)  # inner cell
            ren.fs[a] = next(it)
            ren.outer[a] = st.mu_fs[a].label
        elif kind in ("upgrade", "downgrade"):
            next(it)
    return ren


def cosimulate(t: Term, sigma: MachineState, fuel: Optional[int] = None, fi_factor: int = 40) -> CoSimReport:
    """Run ``t`` in the FS engine and its translation in the FI engine and compare."""
    fuel = sigma.mode.fuel if fuel is None else fuel
    fs_mode = replace(sigma.mode, calculus="fs", security="secure", concurrent=False)
    sigma = replace(sigma, mode=fs_mode)
    fs_events: List[Tuple[str, int, MachineState]] = []
    fs_out = Engine(fs_mode, fuel=fuel, observer=lambda k, a, st: fs_events.append((k, a, st))).run(
        Configuration(sigma, t)
    )
    emb_term = embed_term(t, sigma)
    if isinstance(fs_out, FuelExhausted):
        return CoSimReport(False, fs_out, None, emb_term, ["FS run exhausted its fuel"], inconclusive=True)
    fi_state = embed_state(sigma)
    fi_allocs: List[int] = []
    fi_engine = Engine(
        fi_state.mode,
        fuel=fuel * fi_factor,
        observer=lambda k, a, st: fi_allocs.append(a) if k == "alloc-fi" else None,
    )
    fi_out = fi_engine.run(Configuration(fi_state, emb_term))
    bad: List[str] = []
    if fs_out.kind != fi_out.kind:
        bad.append(f"outcome kinds differ: {fs_out.kind} vs {fi_out.kind}")
        return CoSimReport(False, fs_out, fi_out, emb_term, bad)
    if isinstance(fs_out, MonitorError):
        if fs_out.error != fi_out.error:
            bad.append(f"monitor errors differ: {fs_out.error} vs {fi_out.error}")
        return CoSimReport(not bad, fs_out, fi_out, emb_term, bad)
    if fs_out.state.lcur != fi_out.state.lcur:
        bad.append(f"final labels differ: {fs_out.state.lcur} vs {fi_out.state.lcur}")
    try:
        ren = _build_renaming(sigma, fs_events, fi_allocs, fi_state.next_addr)
    except StopIteration:
        bad.append("allocation sequences do not line up")
        return CoSimReport(False, fs_out, fi_out, emb_term, bad)
    emb = _Embedder(ren, _Names(()))
    if isinstance(fs_out, Value):
        want = _norm(emb.go(fs_out.value))
        got = _norm(fi_out.value)
        if want != got:
            bad.append(f"values differ under the renaming")
    bad.extend(_compare_stores(fs_out.state, fi_out.state, ren, emb))
    return CoSimReport(not bad, fs_out, fi_out, emb_term, bad)


def _compare_stores(fs: MachineState, fi: MachineState, ren: Renaming, emb: _Embedder) -> List[str]:
    bad = []
    for a, cell in sorted(fs.mu_fi.items()):
        other = fi.mu_fi.get(ren.fi.get(a, -1))
        if other is None or _norm(emb.go(cell)) != _norm(other):
            bad.append(f"fi:{a} differs")
    for a, cell in sorted(fs.mu_fs.items()):
        outer = fi.mu_fi.get(ren.fs.get(a, -1))
        if not (isinstance(outer, Lb) and isinstance(outer.body, RefFI)):
            bad.append(f"fs:{a} has no outer cell")
            continue
        if outer.label != cell.label:
            bad.append(f"fs:{a} label on label {cell.label} vs {outer.label}")
        inner_ref = outer.body
        inner = fi.mu_fi.get(inner_ref.addr)
        if inner is None:
            bad.append(f"fs:{a} inner cell missing")
            continue
        if inner_ref.label != cell.body.label or inner.label != cell.body.label:
            bad.append(f"fs:{a} data label {cell.body.label} vs {inner.label}")
        if _norm(emb.go(cell.body.body)) != _norm(inner.body):
            bad.append(f"fs:{a} contents differ")
    return bad


__all__ = [
    "CoSimReport",
    "EmbeddingError",
    "Renaming",
    "cosimulate",
    "embed_state",
    "embed_term",
    "has_fs_syntax",
]
