"""Rendering of golden-trace cases.

A case is a ``.lio`` file whose leading comment lines may carry directives::

    ; mode: fs-au secure      calculus and security mode (default: fs secure)
    ; args: fs:L:H:true        program inputs, as for ``liocell run --arg``
    ; lcur: H                  initial current label
    ; embed                    translate to the FI calculus before running
    ; concurrent               run on the scheduler (prints T-* events)
    ; split-write-check        test-only FS write check

The rendered text is the per-step trace followed by the outcome line.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List

from ..concurrent import concurrent_mode, initial_sched, run_concurrent
from ..machine import Configuration, describe, make_state, trace, trace_line
from ..syntax import parse_program, pretty
from ..syntax.terms import App


def directives(src: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line in src.splitlines():
        s = line.strip()
        if not s.startswith(";"):
            break
        body = s.lstrip(";").strip()
        if ":" in body:
            k, v = body.split(":", 1)
            out[k.strip()] = v.strip()
        elif body and " " not in body:
            out[body] = ""
    return out


def render_case(src: str) -> str:
    from ..cli import CliConfig, _build_inputs

    d = directives(src)
    calc, sec = (d.get("mode", "fs secure").split() + ["secure"])[:2]
    cfg = CliConfig("golden", calculus=calc, security=sec, lcur=d.get("lcur", "L"))
    fi, fs, args = _build_inputs(cfg, d.get("args", "").split())
    term = parse_program(src)
    for a in args:
        term = App(term, a)
    lines: List[str] = []
    if "concurrent" in d:
        mode = concurrent_mode(calc, sec)
        s0 = initial_sched([(cfg.label(), term)], fi, fs)
        out = run_concurrent(s0, mode, fuel=10_000)
        lines = [ev.line() + (f" inner={ev.inner}" if ev.inner else "") for ev in out.trace]
        for r in out.state.finished:
            shown = "" if r.value is None else " " + pretty(r.value)
            lines.append(f"tid={r.tid} {r.status}{shown} lcur={r.lcur}")
        return "\n".join(lines) + "\n"
    st = make_state(cfg.label(), fi, fs, cfg.variant(split_write_check="split-write-check" in d))
    if "embed" in d:
        from ..embedding import embed_state, embed_term

        term, st = embed_term(term, st), embed_state(st)
    tr, out = trace(Configuration(st, term), 10_000)
    return "\n".join(tr + [describe(out)]) + "\n"


def render_file(path) -> str:
    return render_case(Path(path).read_text())


__all__ = ["directives", "render_case", "render_file"]
