"""Erasure of everything more sensitive than an observation level.

Erased objects are plain tuples and terms so that l-equivalence is ordinary
equality. Addresses are replaced by their rank among the visible cells, which
makes the comparison independent of allocations that happened in secret
contexts.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

from ..concurrent import SchedState
from ..lattice import Label
from ..machine import Configuration, MachineState, Outcome, Value
from ..syntax.terms import HOLE, Bag, Bottom, DIVERGE, Lb, RefFI, RefFS, Term, alpha_normalize, transform

HIDDEN = -1


class _Ranks:
    def __init__(self, st_fi, st_fs, l: Label):
        vis = []
        for a, c in st_fi.items():
            if c.label <= l:
                vis.append(a)
        for a, c in st_fs.items():
            if c.label <= l:
                vis.append(a)
        self.rank: Dict[int, int] = {a: i for i, a in enumerate(sorted(vis))}

    def of(self, a: int) -> int:
        return self.rank.get(a, HIDDEN)


def erase_term(t: Term, l: Label, ranks: Optional[_Ranks] = None) -> Term:
    """Replace the payload of every ``Lb l' t`` with ``l' ⋢ l`` by a hole."""

    def f(x: Term) -> Term:
        if isinstance(x, Lb) and not x.label <= l:
            return Lb(x.label, HOLE)
        if isinstance(x, Bottom):
            return DIVERGE
        if ranks is not None:
            if isinstance(x, RefFI):
                return RefFI(x.label, ranks.of(x.addr))
            if isinstance(x, RefFS):
                return RefFS(ranks.of(x.addr))
        return x

    return alpha_normalize(_top_down(t, l, f))


def _top_down(t: Term, l: Label, f) -> Term:
    # stop at hidden labeled values so their contents are never visited
    if isinstance(t, Lb) and not t.label <= l:
        return Lb(t.label, HOLE)
    return f(t.map_kids(lambda c: _top_down(c, l, f)))


def erase_state(st: MachineState, l: Label, ranks: Optional[_Ranks] = None) -> Tuple:
    ranks = ranks or _Ranks(st.mu_fi, st.mu_fs, l)
    return _erase_stores(st.mu_fi, st.mu_fs, l, ranks) + (st.lcur if st.lcur <= l else None,)


def _erase_stores(mu_fi, mu_fs, l: Label, ranks: _Ranks) -> Tuple:
    cells = []
    for a in sorted([*mu_fi, *mu_fs]):
        r = ranks.of(a)
        if r == HIDDEN:
            continue
        if a in mu_fi:
            cells.append(("fi", r, erase_term(mu_fi[a], l, ranks)))
        else:
            cells.append(("fs", r, erase_term(mu_fs[a], l, ranks)))
    return (tuple(cells),)


def erase_config(cfg: Configuration, l: Label) -> Tuple:
    st = cfg.state
    ranks = _Ranks(st.mu_fi, st.mu_fs, l)
    term = erase_term(cfg.term, l, ranks) if st.lcur <= l else HOLE
    return erase_state(st, l, ranks) + (term,)


def _erase_bag(bag: Bag, mu_fs, l: Label, ranks: _Ranks) -> Tuple[int, ...]:
    out = []
    for x in bag.items:
        if isinstance(x, RefFS):
            c = mu_fs.get(x.addr)
            if c is not None and c.label <= l:
                out.append(ranks.of(x.addr))
    return tuple(out)


def erase_sched(s: SchedState, l: Label) -> Tuple:
    """Stores plus the visible threads in queue order, and visible finished results."""
    ranks = _Ranks(s.mu_fi, s.mu_fs, l)
    threads = tuple(
        (k.lcur, _erase_bag(k.bag, s.mu_fs, l, ranks), erase_term(k.term, l, ranks)) for k in s.queue if k.lcur <= l
    )
    done = tuple(
        (r.status, erase_term(r.value, l, ranks) if r.value is not None else None)
        for r in s.finished
        if r.lcur <= l
    )
    return _erase_stores(s.mu_fi, s.mu_fs, l, ranks) + (threads, done)


def erase(x, l: Label):
    """Erase a term, machine state, configuration, value outcome or scheduler state."""
    if isinstance(x, Configuration):
        return erase_config(x, l)
    if isinstance(x, MachineState):
        return erase_state(x, l)
    if isinstance(x, SchedState):
        return erase_sched(x, l)
    if isinstance(x, Value):
        from ..syntax.terms import LIOv

        return erase_config(Configuration(x.state, LIOv(x.value)), l)
    if isinstance(x, Term):
        return erase_term(x, l)
    if isinstance(x, tuple):
        return x  # already erased
    raise TypeError(f"cannot erase {type(x).__name__}")


def l_equiv(a, b, l: Label) -> bool:
    return erase(a, l) == erase(b, l)


__all__ = ["HIDDEN", "erase", "erase_config", "erase_sched", "erase_state", "erase_term", "l_equiv"]
