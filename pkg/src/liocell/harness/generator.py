"""Seeded generator of well-typed LIO programs plus pairs of initial states.

A program is a curried function ``(lam i0 (lam i1 ... body))`` applied to
per-state inputs: labeled values and references preallocated in the
initial stores. The two states differ only in data above L.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..lattice import H, L, Label, TWO_POINT
from ..machine import MachineState, VariantConfig, make_state
from ..syntax.terms import (
    FALSE,
    FI,
    FS,
    TRUE,
    UNIT,
    App,
    Bag,
    Bind,
    BoolLit,
    CopyRef,
    Downgrade,
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
    NewRef,
    ReadRef,
    RefFI,
    RefFS,
    Return,
    Term,
    ToLabeled,
    Unlabel,
    Upgrade,
    Var,
    WithRefs,
    WriteRef,
    free_vars,
    size,
    subterms,
)
from ..syntax.types import TypeCheckError, typecheck_config


@dataclass(frozen=True)
class GenConfig:
    calculus: str = "fs"
    concurrent: bool = False
    statements: int = 5
    depth: int = 2
    max_nodes: int = 0  # 0 means no bound
    templates: bool = False  # mix in attack-shaped fragments
    cosim: bool = False  # one state only; FS inputs satisfy l_o <= l_d
    high_outer: bool = True  # include an FS input whose label on the label is H

    @property
    def has_fi(self) -> bool:
        return self.calculus != "base"

    @property
    def has_fs(self) -> bool:
        return self.calculus in ("fs", "fs-au")


@dataclass(frozen=True)
class Generated:
    program: Term  # ``(lam i0 (lam i1 ... body))``
    args1: Tuple[Term, ...]
    args2: Tuple[Term, ...]
    s1: MachineState
    s2: MachineState
    seed: int
    inputs: Tuple[Tuple[str, str], ...]  # (parameter, kind)

    @property
    def term(self) -> Term:
        return apply_args(self.program, self.args1)

    @property
    def term2(self) -> Term:
        return apply_args(self.program, self.args2)

    def with_program(self, program: Term) -> "Generated":
        return replace(self, program=program)


def apply_args(fn: Term, args: Sequence[Term]) -> Term:
    for a in args:
        fn = App(fn, a)
    return fn


_TY = ("bool", "label", "lab", "rfi", "rfs")


class _Gen:
    def __init__(self, rng: random.Random, cfg: GenConfig):
        self.rng = rng
        self.cfg = cfg
        self.n = 0

    def name(self, base: str) -> str:
        self.n += 1
        return f"{base}{self.n}"

    def pick(self, env, ty):
        vs = [n for n, t in env if t == ty]
        return self.rng.choice(vs) if vs else None

    # -- pure expressions ----------------------------------------------------------------

    def label_lit(self) -> Term:
        return LabelLit(self.rng.choice((L, H)))

    def bool_expr(self, env, d: int) -> Term:
        r = self.rng.random()
        v = self.pick(env, "bool")
        if d <= 0 or r < 0.35:
            if v and self.rng.random() < 0.6:
                return Var(v)
            return BoolLit(self.rng.random() < 0.5)
        if r < 0.55:
            return If(self.bool_expr(env, d - 1), FALSE, TRUE)
        if r < 0.8:
            return LabelOp("flows", self.label_expr(env, d - 1), self.label_expr(env, d - 1))
        return If(self.bool_expr(env, d - 1), self.bool_expr(env, d - 1), self.bool_expr(env, d - 1))

    def label_expr(self, env, d: int) -> Term:
        r = self.rng.random()
        if d <= 0 or r < 0.4:
            v = self.pick(env, "label")
            if v and self.rng.random() < 0.5:
                return Var(v)
            return self.label_lit()
        if r < 0.6:
            op = self.rng.choice(("join", "meet"))
            return LabelOp(op, self.label_expr(env, d - 1), self.label_expr(env, d - 1))
        lv = self.pick(env, "lab")
        if lv and r < 0.8:
            return LabelOf(Var(lv))
        rv = self.pick(env, "rfi")
        if rv:
            return LabelOfRef(FI, Var(rv))
        return self.label_lit()

    # -- statements --------------------------------------------------------------------

    def stmt(self, env, d: int):
        """One monadic statement: ``(binder, type, term)``; binder ``None`` means discard."""
        rng, cfg = self.rng, self.cfg
        opts: List[Tuple[float, Callable]] = [
            (1.0, lambda: ("bool", Return(self.bool_expr(env, d)))),
            (1.0, lambda: ("lab", LabelTerm(self.label_expr(env, d), self.bool_expr(env, d)))),
            (0.6, lambda: ("label", GetLabel())),
        ]
        lv = self.pick(env, "lab")
        if lv:
            opts.append((1.5, lambda: ("bool", Unlabel(Var(lv)))))
        if d > 0:
            opts.append((0.8, lambda: ("unit", If(self.bool_expr(env, d - 1), self.block(env, d - 1, "unit"), self.block(env, d - 1, "unit")))))
            if not cfg.concurrent:
                opts.append((1.2, lambda: ("lab", ToLabeled(self.label_expr(env, 0), self.block(env, d - 1, "bool")))))
            else:
                opts.append((1.2, lambda: ("unit", Fork(self.block(env, d - 1, "unit")))))
        if cfg.has_fi:
            opts.append((0.7, lambda: ("rfi", NewRef(FI, self.label_expr(env, 0), self.bool_expr(env, d)))))
            rv = self.pick(env, "rfi")
            if rv:
                opts += [
                    (1.2, lambda: ("bool", ReadRef(FI, Var(rv)))),
                    (1.0, lambda: ("unit", WriteRef(FI, Var(rv), self.bool_expr(env, d)))),
                ]
                rv2 = self.pick(env, "rfi")
                opts.append((0.4, lambda: ("unit", CopyRef(Var(rv), Var(rv2)))))
        if cfg.has_fs:
            opts.append((0.9, lambda: ("rfs", NewRef(FS, self.label_expr(env, 0), self.bool_expr(env, d)))))
            sv = self.pick(env, "rfs")
            if sv:
                opts += [
                    (1.3, lambda: ("bool", ReadRef(FS, Var(sv)))),
                    (1.3, lambda: ("unit", WriteRef(FS, Var(sv), self.bool_expr(env, d)))),
                    (0.7, lambda: ("label", LabelOfRef(FS, Var(sv)))),
                    (0.6, lambda: ("unit", Upgrade(Var(sv), self.label_expr(env, 0)))),
                    (0.3, lambda: ("unit", Downgrade(Var(sv), self.label_expr(env, 0)))),
                ]
                if d > 0:
                    opts.append((0.6, lambda: self.with_refs(env, d)))
        total = sum(w for w, _ in opts)
        x = rng.random() * total
        for w, f in opts:
            x -= w
            if x <= 0:
                break
        ty, term = f()
        if ty == "unit":
            return None, ty, term
        return self.name(ty[0]), ty, term

    def with_refs(self, env, d: int):
        refs = [n for n, t in env if t == "rfs"]
        chosen = [n for n in refs if self.rng.random() < 0.6]
        inner = [(n, t) for n, t in env if t != "rfs" or n in chosen]
        return "unit", WithRefs(Bag(tuple(Var(n) for n in chosen)), self.block(inner, d - 1, "unit"))

    def block(self, env, d: int, result: str, count: Optional[int] = None, tail: Optional[List] = None) -> Term:
        if count is None:
            count = self.rng.randint(1, max(1, self.cfg.statements // 2))
        stmts: List[Tuple[Optional[str], Term]] = []
        env = list(env)
        for _ in range(count):
            name, ty, term = self.stmt(env, d)
            stmts.append((name, term))
            if name is not None:
                env.append((name, ty))
        final: Term
        if tail:
            for name, ty, term in tail[:-1]:
                stmts.append((name, term))
                if name:
                    env.append((name, ty))
            final = tail[-1]
        elif result == "unit":
            final = Return(UNIT)
        else:
            final = Return(self.bool_expr(env, d))
        out = final
        for name, term in reversed(stmts):
            out = Bind(term, Lam(name or "_", out))
        return out

    # -- attack-shaped fragments ---------------------------------------------------------

    def template(self, env) -> Optional[List]:
        secrets = []
        for n, t in env:
            if t == "rfi" and n.startswith("hi"):
                secrets.append(ReadRef(FI, Var(n)))
            if t == "rfs" and n.startswith("hs"):
                secrets.append(ReadRef(FS, Var(n)))
            if t == "lab" and n.startswith("hl"):
                secrets.append(Unlabel(Var(n)))
        if not secrets or not self.cfg.has_fs:
            return None
        read = self.rng.choice(secrets)
        tmp, h, t, lref, lab = self.name("tmp"), self.name("h"), self.name("t"), self.name("lref"), self.name("l")
        mark = Lam(h, If(Var(h), WriteRef(FS, Var(tmp), TRUE), Return(UNIT)))
        if self.rng.random() < 0.5 or self.cfg.concurrent:
            taint = Bind(read, mark)
            wrap = Fork(taint) if self.cfg.concurrent else ToLabeled(LabelLit(H), Bind(taint, Lam("_", Return(TRUE))))
            steps = [
                (tmp, "rfs", NewRef(FS, LabelLit(L), FALSE)),
                (None, "unit", wrap),
            ]
            if self.cfg.concurrent:
                for _ in range(12):
                    steps.append((None, "unit", Return(UNIT)))
            steps += [
                (lab, "label", LabelOfRef(FS, Var(tmp))),
                Return(LabelOp("flows", LabelLit(H), Var(lab))),
            ]
            return steps
        back = Lam(t, If(Var(t), Return(UNIT), WriteRef(FS, Var(lref), FALSE)))
        return [
            (lref, "rfs", NewRef(FS, LabelLit(L), TRUE)),
            (tmp, "rfs", NewRef(FS, LabelLit(L), FALSE)),
            (None, "unit", ToLabeled(LabelLit(H), Bind(Bind(read, mark), Lam("_", Return(TRUE))))),
            (None, "unit", ToLabeled(LabelLit(H), Bind(Bind(ReadRef(FS, Var(tmp)), back), Lam("_", Return(TRUE))))),
            ReadRef(FS, Var(lref)),
        ]


def _inputs(rng: random.Random, cfg: GenConfig):
    """Parameters, their kinds, and the cells/values for the two states."""
    params = []  # (name, kind, arg1, arg2)
    fi1, fi2, fs1, fs2 = {}, {}, {}, {}
    a = 0
    b1, b2 = rng.random() < 0.5, rng.random() < 0.5
    if not cfg.cosim:
        b2 = not b1
    params.append(("hl", "lab-H", Lb(H, BoolLit(b1)), Lb(H, BoolLit(b2))))
    c = BoolLit(rng.random() < 0.5)
    params.append(("ll", "lab-L", Lb(L, c), Lb(L, c)))
    if cfg.has_fi:
        s1, s2 = rng.random() < 0.5, rng.random() < 0.5
        if not cfg.cosim:
            s2 = not s1
        fi1[a], fi2[a] = Lb(H, BoolLit(s1)), Lb(H, BoolLit(s2))
        params.append(("hi", "fi-H", RefFI(H, a), RefFI(H, a)))
        a += 1
        c = BoolLit(rng.random() < 0.5)
        fi1[a] = fi2[a] = Lb(L, c)
        params.append(("li", "fi-L", RefFI(L, a), RefFI(L, a)))
        a += 1
    if cfg.has_fs:
        s1, s2 = rng.random() < 0.5, rng.random() < 0.5
        if not cfg.cosim:
            s2 = not s1
        fs1[a], fs2[a] = Lb(L, Lb(H, BoolLit(s1))), Lb(L, Lb(H, BoolLit(s2)))
        params.append(("hs", "fs-LH", RefFS(a), RefFS(a)))
        a += 1
        c = BoolLit(rng.random() < 0.5)
        fs1[a] = fs2[a] = Lb(L, Lb(L, c))
        params.append(("ls", "fs-LL", RefFS(a), RefFS(a)))
        a += 1
        if cfg.high_outer and not cfg.concurrent:
            s1 = rng.random() < 0.5
            if cfg.cosim:
                fs1[a] = fs2[a] = Lb(H, Lb(H, BoolLit(s1)))
            else:
                d2 = rng.choice((L, H))
                fs1[a], fs2[a] = Lb(H, Lb(rng.choice((L, H)), BoolLit(s1))), Lb(H, Lb(d2, BoolLit(not s1)))
            params.append(("hh", "fs-H", RefFS(a), RefFS(a)))
            a += 1
    return params, (fi1, fs1), (fi2, fs2)


_KIND_TYPE = {"lab-H": "lab", "lab-L": "lab", "fi-H": "rfi", "fi-L": "rfi", "fs-LH": "rfs", "fs-LL": "rfs", "fs-H": "rfs"}


def _one(seed: int, cfg: GenConfig) -> Generated:
    rng = random.Random(seed)
    g = _Gen(rng, cfg)
    params, (fi1, fs1), (fi2, fs2) = _inputs(rng, cfg)
    env = [(n, _KIND_TYPE[k]) for n, k, _, _ in params]
    tail = g.template(env) if cfg.templates and rng.random() < 0.6 else None
    body = g.block(env, cfg.depth, "bool", count=rng.randint(1, cfg.statements), tail=tail)
    fn = body
    for n, _, _, _ in reversed(params):
        fn = Lam(n, fn)
    mode = VariantConfig(calculus=cfg.calculus, concurrent=cfg.concurrent)
    s1 = make_state(L, fi1, fs1, mode)
    s2 = make_state(L, fi2, fs2, mode)
    args1 = tuple(a for _, _, a, _ in params)
    args2 = tuple(a for _, _, _, a in params)
    return Generated(fn, args1, args2, s1, s2, seed, tuple((n, k) for n, k, _, _ in params))


def gen_program(seed: int, size: int = 5, variant: str = "fs", **kw) -> Generated:
    """Seed-deterministic program and two L-equivalent initial states.

    ``size`` bounds the number of top-level statements. Extra keyword arguments
    are :class:`GenConfig` fields.
    """
    cfg = GenConfig(calculus=variant, statements=max(1, size), **kw)
    sub = 0
    while True:
        g = _one(seed * 7919 + sub, cfg)
        if not cfg.max_nodes or size_of(g.term) <= cfg.max_nodes:
            return replace(g, seed=seed)
        sub += 1
        if sub % 50 == 0 and cfg.statements > 1:
            cfg = replace(cfg, statements=cfg.statements - 1, depth=max(0, cfg.depth - 1))


def size_of(t: Term) -> int:
    return size(t)


def well_typed(t: Term, st: MachineState) -> bool:
    """``t`` is a closed well-typed computation under the store typing of ``st``."""
    try:
        typecheck_config(st, t)
        return True
    except TypeCheckError:
        return False


# -- shrinking ------------------------------------------------------------------------------


def _positions(t: Term, path=()):
    yield path, t
    for i, c in enumerate(t.children()):
        yield from _positions(c, path + (i,))


def _replace_at(t: Term, path, new: Term) -> Term:
    if not path:
        return new
    i = path[0]
    counter = iter(range(10**9))

    def f(c):
        j = next(counter)
        return _replace_at(c, path[1:], new) if j == i else c

    return t.map_kids(f)


def _shrink_candidates(t: Term) -> List[Term]:
    out = []
    for path, s in _positions(t):
        reps = list(s.children())
        if isinstance(s, Bind) and isinstance(s.k, Lam) and s.k.var not in free_vars(s.k.body):
            reps.append(s.k.body)
        for r in reps:
            if r is s:
                continue
            out.append(_replace_at(t, path, r))
    out.sort(key=size)
    return out


def shrink(t: Term, still_failing: Callable[[Term], bool], max_rounds: int = 200) -> Term:
    """Greedy smallest-first subterm replacement, keeping the failure."""
    for _ in range(max_rounds):
        for cand in _shrink_candidates(t):
            if size(cand) < size(t) and still_failing(cand):
                t = cand
                break
        else:
            return t
    return t


__all__ = ["GenConfig", "Generated", "apply_args", "gen_program", "shrink", "size_of", "well_typed"]
