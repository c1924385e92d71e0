"""Known attacks: each is run on both values of a secret, under naive and secure modes."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from ..concurrent import concurrent_mode, delay as delay_block, initial_sched, run_concurrent
from ..lattice import H, L
from ..machine import Configuration, VariantConfig, describe, make_state, run
from ..programs import program_source
from ..syntax import parse_program
from ..syntax.pretty import pretty
from ..syntax.terms import FALSE, TRUE, App, BoolLit, If, Lb, LIOv, RefFI, RefFS, Return, Term
from .erasure import erase_config, erase_sched


@dataclass(frozen=True)
class Attack:
    name: str
    file: str
    secret: str  # fi-H | fs-LH
    concurrent: bool = False
    summary: str = ""

    def term(self) -> Term:
        return parse_program(program_source(self.file))


ATTACKS: Tuple[Attack, ...] = (
    Attack("leak-label", "leak-label.lio", "fs-LH", summary="label of a cell's data reveals the secret"),
    Attack("implicit-flow", "implicit-flow.lio", "fi-H", summary="write on one branch, read back at L"),
    Attack("no-label-query", "no-label-query.lio", "fs-LH", summary="implicit flow without labelOf"),
    Attack("fork-leak", "fork-leak.lio", "fi-H", concurrent=True, summary="forked thread taints a shared cell"),
)


def attack_corpus() -> Tuple[Attack, ...]:
    return ATTACKS


def get_attack(name: str) -> Attack:
    for a in ATTACKS:
        if a.name == name:
            return a
    raise KeyError(f"unknown attack {name!r}; known: {', '.join(a.name for a in ATTACKS)}")


@dataclass(frozen=True)
class Run:
    secret: bool
    kind: str  # Value | Diverged | MonitorError | FuelExhausted
    lcur: object
    value: Optional[Term]
    observed: object  # erased final configuration
    text: str


@dataclass(frozen=True)
class AttackResult:
    attack: str
    calculus: str
    security: str
    runs: Tuple[Run, ...]

    @property
    def leaked(self) -> bool:
        """Both runs end at L with the secret itself as the result."""
        return all(r.kind == "Value" and r.lcur == L and r.value == BoolLit(r.secret) for r in self.runs)

    @property
    def blocked(self) -> bool:
        vals = [r for r in self.runs if r.kind == "Value"]
        return not self.leaked and all(v.observed == vals[0].observed for v in vals)

    @property
    def mode(self) -> str:
        return f"{self.calculus}/{self.security}"

    def line(self) -> str:
        verdict = "LEAK" if self.leaked else ("blocked" if self.blocked else "DISTINGUISHABLE")
        runs = "; ".join(f"h={str(r.secret).lower()}: {r.text}" for r in self.runs)
        return f"{self.attack:<16} {self.mode:<12} {verdict:<8} {runs}"


def _inputs(kind: str, secret: bool):
    b = BoolLit(secret)
    if kind == "fi-H":
        return {0: Lb(H, b)}, {}, RefFI(H, 0)
    if kind == "fs-LH":
        return {}, {0: Lb(L, Lb(H, b))}, RefFS(0)
    raise ValueError(f"unknown secret kind {kind!r}")


def _force_bool(v: Optional[Term], st) -> Optional[Term]:
    # results are unevaluated under call-by-name; branch on them to get a literal
    if v is None:
        return None
    o = run(Configuration(st, If(v, Return(TRUE), Return(FALSE))), fuel=10_000)
    return o.value if o.kind == "Value" else None


def run_attack(
    attack: Attack,
    calculus: str = "fs",
    security: str = "naive",
    fuel: Optional[int] = None,
    delay: int = 10,
) -> AttackResult:
    term = attack.term()
    runs: List[Run] = []
    for secret in (False, True):
        fi, fs, ref = _inputs(attack.secret, secret)
        if attack.concurrent:
            prog = App(App(term, delay_block(delay)), ref)
            mode = concurrent_mode(calculus, security)
            out = run_concurrent(initial_sched([(L, prog)], fi, fs), mode, fuel=fuel)
            main = out.result(1)
            obs = erase_sched(out.state, L)
            if out.status != "Done" or main is None:
                runs.append(Run(secret, "FuelExhausted", None, None, obs, f"FuelExhausted after {out.steps} steps"))
                continue
            st = make_state(L, out.state.mu_fi, out.state.mu_fs, replace(mode, concurrent=False))
            value = _force_bool(main.value, st)
            text = f"{main.status}" + (f" {pretty(value)}" if value is not None else "")
            text += f" lcur={main.lcur}" + (f" ({main.reason})" if main.reason else "")
            runs.append(Run(secret, main.status, main.lcur, value, obs, text))
        else:
            mode = VariantConfig(calculus, security)
            st = make_state(L, fi, fs, mode)
            o = run(Configuration(st, App(term, ref)), fuel=fuel)
            value = _force_bool(getattr(o, "value", None), o.state)
            obs = erase_config(Configuration(o.state, LIOv(value)), L) if value is not None else None
            text = describe(o) if value is None else f"Value {pretty(value)} lcur={o.state.lcur}"
            runs.append(Run(secret, o.kind, o.state.lcur, value, obs, text))
    return AttackResult(attack.name, calculus, security, tuple(runs))


def secure_modes(attack: Attack) -> Tuple[str, ...]:
    return ("fs-au", "fs") if attack.concurrent else ("fs", "fs-au")


__all__ = ["ATTACKS", "Attack", "AttackResult", "attack_corpus", "get_attack", "run_attack", "secure_modes"]
