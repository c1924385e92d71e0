import itertools

import pytest
from hypothesis import given, strategies as st

from liocell.lattice import (
    H,
    L,
    PU_THREE_POINT,
    TWO_POINT,
    LatticeError,
    LatticeMismatch,
    LatticeSpec,
    dump_lattice,
    law_violations,
    load_lattice,
    parse_lattice,
    resolve_lattice,
)


@pytest.mark.parametrize("spec", [TWO_POINT, PU_THREE_POINT], ids=lambda s: s.name)
def test_builtin_lattices_satisfy_all_laws(spec):
    assert law_violations(spec) == []


def test_two_point_tables():
    assert L <= H and not H <= L
    assert L | H == H and L & H == L
    assert TWO_POINT.bottom == L and TWO_POINT.top == H


def test_pu_lattice_is_a_chain():
    lab = PU_THREE_POINT.label
    assert lab("L") <= lab("H") <= lab("P")
    assert lab("L") | lab("P") == lab("P")


def test_user_lattice_file(data_dir):
    d = load_lattice(data_dir / "diamond.lat")
    a, b = d.label("A"), d.label("B")
    assert not a <= b and not b <= a
    assert a | b == d.label("Top") and a & b == d.label("Bot")
    assert law_violations(d) == []


@pytest.mark.parametrize("name", ["broken-no-join.lat", "broken-cycle.lat"])
def test_broken_lattice_files_are_rejected(data_dir, name):
    with pytest.raises(LatticeError):
        load_lattice(data_dir / name, register_it=False)


def test_parse_errors():
    with pytest.raises(LatticeError, match="elements"):
        parse_lattice("order:\n  A <= B\n")
    with pytest.raises(LatticeError, match="unknown element"):
        parse_lattice("elements: A\norder: A <= Z\n")
    with pytest.raises(LatticeError, match="a <= b"):
        parse_lattice("elements: A B\norder: A < B\n")


def test_dump_round_trips():
    again = parse_lattice(dump_lattice(PU_THREE_POINT), name="pu-copy")
    assert again.names == PU_THREE_POINT.names
    for a, b in itertools.product(again.names, repeat=2):
        assert again.leq_names(a, b) == PU_THREE_POINT.leq_names(a, b)


def test_labels_from_different_lattices_do_not_mix():
    with pytest.raises(LatticeMismatch):
        L | PU_THREE_POINT.label("H")


def test_resolve_by_name_and_path(data_dir):
    assert resolve_lattice("two-point") is TWO_POINT
    assert resolve_lattice(str(data_dir / "diamond.lat")).name == "diamond"


@st.composite
def random_lattice(draw):
    # random powerset lattices are always lattices; order by inclusion
    n = draw(st.integers(1, 3))
    atoms = [f"a{i}" for i in range(n)]
    elems = [frozenset(c) for r in range(n + 1) for c in itertools.combinations(atoms, r)]
    name = lambda s: "e_" + "_".join(sorted(s)) if s else "bot"
    order = [(name(x), name(y)) for x in elems for y in elems if x < y]
    return LatticeSpec(f"pow{n}", [name(e) for e in elems], order)


@given(random_lattice())
def test_powerset_lattices_satisfy_laws(spec):
    assert law_violations(spec) == []
