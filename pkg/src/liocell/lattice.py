"""Finite security lattices.

Lattices are table driven: the order relation is given as generating pairs,
closed reflexively and transitively, and join/meet tables are computed from it.
All lattice laws are checked exhaustively when a lattice is built, so a bad
user file fails at load time rather than in the middle of a run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Mapping, Tuple


class LatticeError(ValueError):
    """A lattice description that is malformed or violates a lattice law."""


class LatticeMismatch(ValueError):
    """Two labels from different lattices were combined."""


_REGISTRY: Dict[str, "LatticeSpec"] = {}


@dataclass(frozen=True)
class Label:
    name: str
    lattice: str

    @property
    def spec(self) -> "LatticeSpec":
        return _REGISTRY[self.lattice]

    def __le__(self, other: "Label") -> bool:
        return flows(self, other)

    def __or__(self, other: "Label") -> "Label":
        return join(self, other)

    def __and__(self, other: "Label") -> "Label":
        return meet(self, other)

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"Label({self.name!r}@{self.lattice})"


class LatticeSpec:
    """A finite lattice with precomputed order, join and meet tables."""

    def __init__(self, name: str, elements: Iterable[str], order: Iterable[Tuple[str, str]]):
        names = list(dict.fromkeys(elements))
        if not names:
            raise LatticeError(f"lattice {name!r} has no elements")
        known = set(names)
        for a, b in order:
            for x in (a, b):
                if x not in known:
                    raise LatticeError(f"order mentions unknown element {x!r}")
        self.name = name
        self.names: Tuple[str, ...] = tuple(names)
        self._leq = _closure(names, order)
        self._check_antisymmetry()
        self._join = self._bound_table(upper=True)
        self._meet = self._bound_table(upper=False)
        self.elements: Tuple[Label, ...] = tuple(Label(n, name) for n in names)
        self._verify_laws()

    # -- construction helpers -------------------------------------------------

    def _check_antisymmetry(self) -> None:
        for a, b in itertools.combinations(self.names, 2):
            if (a, b) in self._leq and (b, a) in self._leq:
                raise LatticeError(f"order is not antisymmetric: {a} <= {b} and {b} <= {a}")

    def _bound_table(self, upper: bool) -> Dict[Tuple[str, str], str]:
        table = {}
        for a in self.names:
            for b in self.names:
                if upper:
                    cands = [c for c in self.names if (a, c) in self._leq and (b, c) in self._leq]
                    best = [c for c in cands if all((c, d) in self._leq for d in cands)]
                else:
                    cands = [c for c in self.names if (c, a) in self._leq and (c, b) in self._leq]
                    best = [c for c in cands if all((d, c) in self._leq for d in cands)]
                if len(best) != 1:
                    kind = "least upper" if upper else "greatest lower"
                    raise LatticeError(f"{a} and {b} have no {kind} bound")
                table[(a, b)] = best[0]
        return table

    def _verify_laws(self) -> None:
        problems = law_violations(self)
        if problems:
            raise LatticeError("; ".join(problems[:5]))

    # -- queries --------------------------------------------------------------

    def label(self, name: str) -> Label:
        if name not in self.names:
            raise LatticeError(f"{name!r} is not an element of lattice {self.name!r}")
        return Label(name, self.name)

    def has(self, name: str) -> bool:
        return name in self.names

    def leq_names(self, a: str, b: str) -> bool:
        return (a, b) in self._leq

    def join_names(self, a: str, b: str) -> str:
        return self._join[(a, b)]

    def meet_names(self, a: str, b: str) -> str:
        return self._meet[(a, b)]

    @property
    def bottom(self) -> Label:
        return Label(self._fold(self.meet_names), self.name)

    @property
    def top(self) -> Label:
        return Label(self._fold(self.join_names), self.name)

    def _fold(self, op) -> str:
        acc = self.names[0]
        for n in self.names[1:]:
            acc = op(acc, n)
        return acc

    def __repr__(self) -> str:
        return f"LatticeSpec({self.name!r}, {list(self.names)})"


def _closure(names, order) -> FrozenSet[Tuple[str, str]]:
    leq = {(n, n) for n in names}
    leq.update(order)
    changed = True
    while changed:
        changed = False
        for (a, b), (c, d) in itertools.product(list(leq), list(leq)):
            if b == c and (a, d) not in leq:
                leq.add((a, d))
                changed = True
    return frozenset(leq)


def law_violations(spec: LatticeSpec) -> list:
    """Exhaustively check partial-order and lub/glb laws; return messages."""
    out = []
    ns = spec.names
    leq, j, m = spec.leq_names, spec.join_names, spec.meet_names
    for a in ns:
        if not leq(a, a):
            out.append(f"reflexivity fails at {a}")
        if j(a, a) != a or m(a, a) != a:
            out.append(f"idempotence fails at {a}")
    for a, b in itertools.product(ns, ns):
        if a != b and leq(a, b) and leq(b, a):
            out.append(f"antisymmetry fails at {a},{b}")
        if j(a, b) != j(b, a) or m(a, b) != m(b, a):
            out.append(f"commutativity fails at {a},{b}")
        if not (leq(a, j(a, b)) and leq(b, j(a, b))):
            out.append(f"join is not an upper bound at {a},{b}")
        if not (leq(m(a, b), a) and leq(m(a, b), b)):
            out.append(f"meet is not a lower bound at {a},{b}")
        if m(a, j(a, b)) != a or j(a, m(a, b)) != a:
            out.append(f"absorption fails at {a},{b}")
        if leq(a, b) != (j(a, b) == b):
            out.append(f"order and join disagree at {a},{b}")
    for a, b, c in itertools.product(ns, ns, ns):
        if leq(a, b) and leq(b, c) and not leq(a, c):
            out.append(f"transitivity fails at {a},{b},{c}")
        if j(a, j(b, c)) != j(j(a, b), c) or m(a, m(b, c)) != m(m(a, b), c):
            out.append(f"associativity fails at {a},{b},{c}")
        if leq(a, c) and leq(b, c) and not leq(j(a, b), c):
            out.append(f"join is not least at {a},{b},{c}")
        if leq(c, a) and leq(c, b) and not leq(c, m(a, b)):
            out.append(f"meet is not greatest at {a},{b},{c}")
    return out


# -- registry and label algebra ------------------------------------------------


def register(spec: LatticeSpec) -> LatticeSpec:
    existing = _REGISTRY.get(spec.name)
    if existing is not None and (existing.names != spec.names or existing._leq != spec._leq):
        raise LatticeError(f"a different lattice named {spec.name!r} is already registered")
    _REGISTRY[spec.name] = spec
    return spec


def get_lattice(name: str) -> LatticeSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise LatticeError(f"unknown lattice {name!r}") from None


def _same(a: Label, b: Label) -> LatticeSpec:
    if a.lattice != b.lattice:
        raise LatticeMismatch(f"labels {a!r} and {b!r} belong to different lattices")
    return _REGISTRY[a.lattice]


def flows(a: Label, b: Label) -> bool:
    return _same(a, b).leq_names(a.name, b.name)


def join(a: Label, b: Label) -> Label:
    return Label(_same(a, b).join_names(a.name, b.name), a.lattice)


def meet(a: Label, b: Label) -> Label:
    return Label(_same(a, b).meet_names(a.name, b.name), a.lattice)


# -- file format ---------------------------------------------------------------


def parse_lattice(text: str, name: str = "user") -> LatticeSpec:
    """Parse the line-oriented lattice format.

    ::

        name: diamond        # optional
        elements: Bot A B Top
        order:
          Bot <= A
          Bot <= B
          A <= Top
          B <= Top
    """
    elements: list = []
    order: list = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, rest = line.partition(":")
        if sep and head.strip() in ("name", "elements", "order"):
            section = head.strip()
            rest = rest.strip()
            if section == "name":
                if not rest:
                    raise LatticeError(f"line {lineno}: empty lattice name")
                name = rest
                section = None
                continue
            if not rest:
                continue
            line = rest
        if section == "elements":
            for tok in line.replace(",", " ").split():
                if not tok.isidentifier():
                    raise LatticeError(f"line {lineno}: bad element name {tok!r}")
                elements.append(tok)
        elif section == "order":
            for part in line.split(","):
                pieces = part.split("<=")
                if len(pieces) != 2 or not all(p.strip() for p in pieces):
                    raise LatticeError(f"line {lineno}: expected 'a <= b', got {part.strip()!r}")
                order.append((pieces[0].strip(), pieces[1].strip()))
        else:
            raise LatticeError(f"line {lineno}: text outside any section")
    if not elements:
        raise LatticeError("missing 'elements:' section")
    return LatticeSpec(name, elements, order)


def load_lattice(path, register_it: bool = True) -> LatticeSpec:
    p = Path(path)
    spec = parse_lattice(p.read_text(), name=p.stem)
    return register(spec) if register_it else spec


def dump_lattice(spec: LatticeSpec) -> str:
    pairs = [
        f"  {a} <= {b}"
        for a in spec.names
        for b in spec.names
        if a != b and spec.leq_names(a, b)
    ]
    return "\n".join([f"name: {spec.name}", "elements: " + " ".join(spec.names), "order:", *pairs]) + "\n"


TWO_POINT = register(LatticeSpec("two-point", ["L", "H"], [("L", "H")]))
PU_THREE_POINT = register(LatticeSpec("pu-three-point", ["L", "H", "P"], [("L", "H"), ("H", "P")]))

BUILTINS: Mapping[str, LatticeSpec] = {TWO_POINT.name: TWO_POINT, PU_THREE_POINT.name: PU_THREE_POINT}

L = TWO_POINT.label("L")
H = TWO_POINT.label("H")


def resolve_lattice(name_or_path: str) -> LatticeSpec:
    """Built-in name, already registered name, or a path to a lattice file."""
    if name_or_path in _REGISTRY:
        return _REGISTRY[name_or_path]
    return load_lattice(name_or_path)
