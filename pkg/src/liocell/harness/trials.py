"""Single noninterference trials over a pair of initial configurations."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

from ..concurrent import ConcOutcome, SchedState, run_concurrent
from ..lattice import L, Label
from ..machine import Configuration, MachineState, Outcome, Value, VariantConfig, describe, run
from ..syntax.terms import LIOv, Term
from .erasure import erase_config, erase_sched

PASS = "Pass"
INCONCLUSIVE = "Inconclusive"
COUNTEREXAMPLE = "Counterexample"


@dataclass(frozen=True)
class Verdict:
    status: str
    reason: str = ""
    witness: Optional[object] = None  # the pair of outcomes, for counterexamples

    @property
    def ok(self) -> bool:
        return self.status != COUNTEREXAMPLE

    def __str__(self) -> str:
        return f"{self.status}: {self.reason}" if self.reason else self.status


def _final(out: Value):
    return Configuration(out.state, LIOv(out.value))


def tini_trial(
    t: Term,
    s1: MachineState,
    s2: MachineState,
    mode: Optional[VariantConfig] = None,
    fuel: Optional[int] = None,
    l: Label = L,
    t2: Optional[Term] = None,
) -> Verdict:
    """Run both configurations; if both produce a value the results must be l-equivalent.

    Monitor errors and divergence count as non-termination. A run that runs
    out of fuel while the other one finished makes the trial inconclusive.
    """
    t2 = t if t2 is None else t2
    if mode is not None:
        s1, s2 = replace(s1, mode=mode), replace(s2, mode=mode)
    c1, c2 = Configuration(s1, t), Configuration(s2, t2)
    if erase_config(c1, l) != erase_config(c2, l):
        return Verdict(INCONCLUSIVE, "initial configurations are not l-equivalent")
    o1, o2 = run(c1, fuel=fuel), run(c2, fuel=fuel)
    k1, k2 = o1.kind, o2.kind
    if k1 == "FuelExhausted" or k2 == "FuelExhausted":
        if "Value" in (k1, k2):
            return Verdict(INCONCLUSIVE, "one run exhausted its fuel", (o1, o2))
        return Verdict(PASS, "no terminating pair", (o1, o2))
    if k1 != "Value" or k2 != "Value":
        return Verdict(PASS, f"{k1}/{k2}", (o1, o2))
    if erase_config(_final(o1), l) == erase_config(_final(o2), l):
        return Verdict(PASS, "l-equivalent results", (o1, o2))
    return Verdict(COUNTEREXAMPLE, f"{describe(o1)} vs {describe(o2)}", (o1, o2))


def _observations(s: SchedState, mode, fuel, l: Label, check_invariant: bool):
    snaps: List = [erase_sched(s, l)]

    def on_step(st, ev):
        e = erase_sched(st, l)
        if e != snaps[-1]:  # drop stutter steps
            snaps.append(e)

    out = run_concurrent(s, mode, fuel=fuel, on_step=on_step, check_invariant=check_invariant)
    return snaps, out


def tsni_trial(
    s1: SchedState,
    s2: SchedState,
    mode: Optional[VariantConfig] = None,
    fuel: Optional[int] = None,
    l: Label = L,
    check_invariant: bool = True,
) -> Verdict:
    """Compare the stutter-free sequences of erased scheduler states.

    If either run is cut off by fuel, only the common prefix is compared.
    """
    if erase_sched(s1, l) != erase_sched(s2, l):
        return Verdict(INCONCLUSIVE, "initial states are not l-equivalent")
    tr1, o1 = _observations(s1, mode, fuel, l, check_invariant)
    tr2, o2 = _observations(s2, mode, fuel, l, check_invariant)
    cut = o1.status == "FuelExhausted" or o2.status == "FuelExhausted"
    if cut:
        n = min(len(tr1), len(tr2))
        a, b = tr1[:n], tr2[:n]
    else:
        a, b = tr1, tr2
    if a == b:
        return Verdict(PASS, "prefix agrees" if cut else "traces agree", (o1, o2))
    i = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
    return Verdict(COUNTEREXAMPLE, f"observations differ at visible step {i}", (o1, o2))


def generated_trial(
    g,
    mode: VariantConfig,
    concurrent: bool = False,
    fuel: Optional[int] = None,
    l: Label = L,
    program: Optional[Term] = None,
) -> Verdict:
    """One TINI (or, with ``concurrent``, TSNI) trial for a generated program."""
    from ..concurrent import initial_sched
    from .generator import apply_args

    prog = g.program if program is None else program
    t1, t2 = apply_args(prog, g.args1), apply_args(prog, g.args2)
    if concurrent:
        s1 = initial_sched([(g.s1.lcur, t1)], g.s1.mu_fi, g.s1.mu_fs)
        s2 = initial_sched([(g.s2.lcur, t2)], g.s2.mu_fi, g.s2.mu_fs)
        return tsni_trial(s1, s2, mode, fuel=fuel, l=l, check_invariant=mode.auto_upgrade)
    return tini_trial(t1, g.s1, g.s2, mode, fuel=fuel, l=l, t2=t2)


__all__ = ["COUNTEREXAMPLE", "INCONCLUSIVE", "PASS", "Verdict", "generated_trial", "tini_trial", "tsni_trial"]
