"""Command-line entry point: ``liocell run|trace|typecheck|embed|check-ni|compare|attacks``.

Exit codes: 0 success, 1 monitor error or divergence, 2 usage/parse error,
3 counterexample (or leak) found.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

from . import __version__
from .lattice import L, Label, LatticeError, LatticeSpec, TWO_POINT, resolve_lattice
from .machine import (
    CALCULI,
    Configuration,
    FuelExhausted,
    MachineState,
    MonitorError,
    Value,
    VariantConfig,
    default_fuel,
    describe,
    make_state,
    run,
    trace,
)
from .syntax import ParseError, TypeCheckError, parse_program, pretty, typecheck_config
from .syntax.terms import FALSE, TRUE, UNIT, App, Lb, RefFI, RefFS, Term

EXIT_OK, EXIT_HALT, EXIT_USAGE, EXIT_FOUND = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    calculus: str = "fs"
    security: Optional[str] = None  # None: subcommand default
    lattice: str = TWO_POINT.name
    lcur: str = "L"
    fuel: int = 100_000
    trace: bool = False
    json: bool = False
    seed: int = 0

    def spec(self) -> LatticeSpec:
        try:
            return resolve_lattice(self.lattice)
        except (OSError, LatticeError) as e:
            raise UsageError(f"cannot load lattice {self.lattice!r}: {e}") from e

    def variant(self, **kw) -> VariantConfig:
        try:
            return VariantConfig(self.calculus, self.security or "secure", self.fuel, **kw)
        except ValueError as e:
            raise UsageError(str(e)) from e

    def label(self, name: Optional[str] = None) -> Label:
        spec = self.spec()
        name = self.lcur if name is None else name
        if not spec.has(name):
            raise UsageError(f"unknown label {name!r} in lattice {spec.name!r}")
        return spec.label(name)


# -- program inputs -------------------------------------------------------------------------

_VALUES = {"true": TRUE, "false": FALSE, "unit": UNIT}


def _value(text: str) -> Term:
    if text not in _VALUES:
        raise UsageError(f"argument values are true, false or unit, not {text!r}")
    return _VALUES[text]


def _build_inputs(cfg: CliConfig, specs: Sequence[str]):
    """``lb:LABEL:V`` labeled value, ``fi:LABEL:V`` FI cell, ``fs:LO:LD:V`` FS cell."""
    fi, fs, args = {}, {}, []
    for i, s in enumerate(specs):
        parts = s.split(":")
        kind = parts[0]
        if kind == "lb" and len(parts) == 3:
            args.append(Lb(cfg.label(parts[1]), _value(parts[2])))
        elif kind == "fi" and len(parts) == 3:
            lab = cfg.label(parts[1])
            fi[i] = Lb(lab, _value(parts[2]))
            args.append(RefFI(lab, i))
        elif kind == "fs" and len(parts) == 4:
            fs[i] = Lb(cfg.label(parts[1]), Lb(cfg.label(parts[2]), _value(parts[3])))
            args.append(RefFS(i))
        else:
            raise UsageError(f"bad --arg {s!r}; expected lb:LABEL:V, fi:LABEL:V or fs:LO:LD:V")
    return fi, fs, args


def _load(cfg: CliConfig, path: str, arg_specs: Sequence[str], **variant_kw):
    try:
        with open(path) as fh:
            src = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from e
    term = parse_program(src, cfg.spec())
    fi, fs, args = _build_inputs(cfg, arg_specs or ())
    for a in args:
        term = App(term, a)
    st = make_state(cfg.label(), fi, fs, cfg.variant(**variant_kw))
    return Configuration(st, term)


# -- JSON -----------------------------------------------------------------------------------


def store_json(st: MachineState) -> dict:
    show = lambda t: pretty(t, frozenset(st.lattice.names))
    fi = [{"addr": f"fi:{a}", "label": str(c.label), "value": show(c.body)} for a, c in sorted(st.mu_fi.items())]
    fs = [
        {"addr": f"fs:{a}", "label": str(c.label), "inner_label": str(c.body.label), "value": show(c.body.body)}
        for a, c in sorted(st.mu_fs.items())
    ]
    return {"mu_fi": fi, "mu_fs": fs}


def outcome_json(out) -> dict:
    st = out.state
    d = {
        "outcome": out.kind,
        "lcur": str(st.lcur),
        "value": pretty(out.value, frozenset(st.lattice.names)) if isinstance(out, Value) else None,
        "steps": out.steps,
    }
    if isinstance(out, MonitorError):
        d.update(error=out.error, rule=out.rule, reason=out.reason)
    d.update(store_json(st))
    return d


def _exit_for(out) -> int:
    return EXIT_OK if isinstance(out, Value) else EXIT_HALT


def _print_stores(st: MachineState) -> None:
    s = store_json(st)
    for c in s["mu_fi"]:
        print(f"  {c['addr']} {c['label']} {c['value']}")
    for c in s["mu_fs"]:
        print(f"  {c['addr']} {c['label']} {c['inner_label']} {c['value']}")


# -- subcommands ----------------------------------------------------------------------------


def cmd_run(cfg: CliConfig, ns) -> int:
    c = _load(cfg, ns.file, ns.arg, split_write_check=ns.split_write_check)
    if cfg.trace:
        lines, out = trace(c, cfg.fuel)
        if not cfg.json:
            print("\n".join(lines))
    else:
        out = run(c, fuel=cfg.fuel)
    if cfg.json:
        print(json.dumps(outcome_json(out), indent=2))
    else:
        print(describe(out))
        _print_stores(out.state)
    return _exit_for(out)


def cmd_trace(cfg: CliConfig, ns) -> int:
    c = _load(cfg, ns.file, ns.arg, split_write_check=ns.split_write_check)
    lines, out = trace(c, cfg.fuel)
    print("\n".join(lines))
    print(describe(out))
    return _exit_for(out)


def cmd_typecheck(cfg: CliConfig, ns) -> int:
    c = _load(cfg, ns.file, ns.arg)
    ty = typecheck_config(c.state, c.term)
    if cfg.json:
        print(json.dumps({"type": str(ty)}))
    else:
        print(ty)
    return EXIT_OK


def cmd_embed(cfg: CliConfig, ns) -> int:
    from .embedding import embed_state, embed_term

    c = _load(cfg, ns.file, ns.arg)
    term = embed_term(c.term, c.state)
    st = embed_state(c.state)
    names = frozenset(st.lattice.names)
    state = {
        "lcur": str(st.lcur),
        "mu_fi": [{"addr": a, "label": str(x.label), "value": pretty(x.body, names)} for a, x in sorted(st.mu_fi.items())],
    }
    if cfg.json:
        print(json.dumps({"term": pretty(term, names), "state": state}, indent=2))
    else:
        print(pretty(term, names))
        print(json.dumps(state, indent=2))
    return EXIT_OK


def cmd_check_ni(cfg: CliConfig, ns) -> int:
    from .concurrent import concurrent_mode
    from .harness.generator import apply_args, gen_program, shrink, well_typed
    from .harness.trials import COUNTEREXAMPLE, generated_trial

    level = cfg.label(ns.level)
    security = cfg.security or "secure"
    if ns.concurrent:
        try:
            mode = concurrent_mode(cfg.calculus, security)
        except ValueError as e:
            raise UsageError(str(e)) from e
        if not mode.has_fs:
            raise UsageError("concurrent trials need --variant fs or fs-au")
    else:
        mode = cfg.variant()
    counts = {"Pass": 0, "Inconclusive": 0, "Counterexample": 0}
    examples = []
    for i in range(ns.trials):
        seed = cfg.seed + i
        g = gen_program(seed, ns.size, cfg.calculus, concurrent=ns.concurrent, templates=ns.templates)

        def trial(prog):
            return generated_trial(g, mode, ns.concurrent, ns.trial_fuel, level, program=prog)

        def still(prog):
            t1, t2 = apply_args(prog, g.args1), apply_args(prog, g.args2)
            return well_typed(t1, g.s1) and well_typed(t2, g.s2) and trial(prog).status == COUNTEREXAMPLE

        v = trial(g.program)
        counts[v.status] += 1
        if v.status == COUNTEREXAMPLE and len(examples) < ns.max_examples:
            small = shrink(g.program, still)
            names = frozenset(g.s1.lattice.names)
            examples.append(
                {
                    "seed": seed,
                    "reason": trial(small).reason,
                    "program": pretty(small, names),
                    "args1": [pretty(a, names) for a in g.args1],
                    "args2": [pretty(a, names) for a in g.args2],
                    "store1": store_json(g.s1),
                    "store2": store_json(g.s2),
                }
            )
    report = {
        "property": "TSNI" if ns.concurrent else "TINI",
        "variant": cfg.calculus,
        "mode": security,
        "level": str(level),
        "trials": ns.trials,
        "seed": cfg.seed,
        "pass": counts["Pass"],
        "inconclusive": counts["Inconclusive"],
        "counterexamples": counts["Counterexample"],
        "examples": examples,
    }
    print(json.dumps(report, indent=2))
    return EXIT_FOUND if counts["Counterexample"] else EXIT_OK


def cmd_compare(cfg: CliConfig, ns) -> int:
    from .policies import ImpError, compare_policies, format_table, split_programs

    try:
        with open(ns.file) as fh:
            src = fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {ns.file}: {e.strerror}") from e
    progs = split_programs(src, default_name=ns.file.rsplit("/", 1)[-1].rsplit(".", 1)[0])
    rows = [compare_policies(p, fuel=cfg.fuel) for p in progs]
    if cfg.json:
        out = [
            {"program": r.name, **{v.monitor: {"verdict": v.label, "outputs": v.show_outputs() if v.accepted else None} for v in r.verdicts}}
            for r in rows
        ]
        print(json.dumps(out, indent=2))
    else:
        print(format_table(rows))
    return EXIT_OK


def cmd_attacks(cfg: CliConfig, ns) -> int:
    from .harness.corpus import attack_corpus, run_attack, secure_modes

    plan = []
    for a in attack_corpus():
        if cfg.security in (None, "naive"):
            plan.append((a, ns.calculus or "fs", "naive"))
        if cfg.security in (None, "secure"):
            for calc in [ns.calculus] if ns.calculus else secure_modes(a):
                plan.append((a, calc, "secure"))
    results = []
    for a, calc, sec in plan:
        try:
            results.append(run_attack(a, calc, sec, fuel=cfg.fuel, delay=ns.delay))
        except ValueError as e:
            raise UsageError(str(e)) from e
    if cfg.json:
        print(
            json.dumps(
                [
                    {
                        "attack": r.attack,
                        "calculus": r.calculus,
                        "mode": r.security,
                        "leaked": r.leaked,
                        "blocked": r.blocked,
                        "runs": [{"secret": x.secret, "outcome": x.kind, "lcur": str(x.lcur), "text": x.text} for x in r.runs],
                    }
                    for r in results
                ],
                indent=2,
            )
        )
    else:
        for r in results:
            print(r.line())
    naive_leaks = [r for r in results if r.security == "naive" and r.leaked]
    secure_leaks = [r for r in results if r.security == "secure" and not r.blocked]
    if cfg.security == "naive":
        return EXIT_FOUND if naive_leaks else EXIT_OK
    if secure_leaks:
        return EXIT_FOUND
    if cfg.security is None and len(naive_leaks) != sum(1 for r in results if r.security == "naive"):
        return EXIT_HALT  # a known attack no longer reproduces
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--calculus", "--variant", dest="calculus", choices=CALCULI, default=None)
    common.add_argument("--mode", choices=("secure", "naive"), default=None)
    common.add_argument("--lattice", default=TWO_POINT.name, help="built-in lattice name or lattice file")
    common.add_argument("--lcur", default="L", help="initial current label")
    common.add_argument("--fuel", type=int, default=None, help="step budget (default: $LIOCELL_FUEL or 100000)")
    common.add_argument("--json", action="store_true")
    common.add_argument("--seed", type=int, default=0)

    files = argparse.ArgumentParser(add_help=False)
    files.add_argument("file")
    files.add_argument("--arg", action="append", default=[], metavar="SPEC", help="program input: lb:LABEL:V, fi:LABEL:V or fs:LO:LD:V")
    files.add_argument("--split-write-check", action="store_true", help="check l_cur against both FS labels separately")

    p = argparse.ArgumentParser(prog="liocell", description="LIO with flow-sensitive references.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", parents=[common, files], help="evaluate a program")
    r.add_argument("--trace", action="store_true")
    sub.add_parser("trace", parents=[common, files], help="print one line per reduction step")
    sub.add_parser("typecheck", parents=[common, files], help="typecheck a program")
    sub.add_parser("embed", parents=[common, files], help="translate FS references into FI ones")
    c = sub.add_parser("check-ni", parents=[common], help="random noninterference trials")
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--level", default="L")
    c.add_argument("--size", type=int, default=5)
    c.add_argument("--concurrent", action="store_true", help="TSNI trials on the scheduler")
    c.add_argument("--templates", action="store_true", help="mix attack-shaped fragments into programs")
    c.add_argument("--trial-fuel", type=int, default=20_000)
    c.add_argument("--max-examples", type=int, default=3)
    sub.add_parser("compare", parents=[common, files], help="permissiveness table for .imp programs")
    a = sub.add_parser("attacks", parents=[common], help="run the attack corpus")
    a.add_argument("--delay", type=int, default=10, help="no-op steps the parent waits after forking")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    cfg = CliConfig(
        subcommand=ns.cmd,
        calculus=ns.calculus or "fs",
        security=ns.mode,
        lattice=ns.lattice,
        lcur=ns.lcur,
        fuel=default_fuel() if ns.fuel is None else ns.fuel,
        trace=getattr(ns, "trace", False),
        json=ns.json,
        seed=ns.seed,
    )
    handlers = {
        "run": cmd_run,
        "trace": cmd_trace,
        "typecheck": cmd_typecheck,
        "embed": cmd_embed,
        "check-ni": cmd_check_ni,
        "compare": cmd_compare,
        "attacks": cmd_attacks,
    }
    try:
        return handlers[ns.cmd](cfg, ns)
    except (UsageError, ParseError, TypeCheckError) as e:
        print(f"liocell: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # desugaring and embedding errors are input errors too
        from .embedding import EmbeddingError
        from .policies import ImpError

        if isinstance(e, (EmbeddingError, ImpError)):
            print(f"liocell: error: {e}", file=sys.stderr)
            return EXIT_USAGE
        raise


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
