import pytest
from hypothesis import given, settings, strategies as st

from liocell.embedding import EmbeddingError, cosimulate, embed_state, embed_term, has_fs_syntax
from liocell.harness.generator import gen_program
from liocell.lattice import H, L
from liocell.machine import Configuration, VariantConfig, make_state, run
from liocell.programs import program_source
from liocell.syntax import parse_program, typecheck_config
from liocell.syntax.terms import TRUE, UNIT, App, Lb, RefFI, RefFS, WrapRef, size, subterms


def p(src):
    return parse_program(src, allow_tcb=True)


HAND = {
    "permissiveness": (program_source("permissiveness.lio"), {}),
    "write-fail": (
        "(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (writeRef fs #(Ref fs 0) (bool false))))))",
        {0: Lb(L, Lb(L, TRUE))},
    ),
    "upgrade": ("(bind (upgrade #(Ref fs 0) H) (lam _ (labelOfRef fs #(Ref fs 0))))", {0: Lb(L, Lb(L, TRUE))}),
    "downgrade": ("(bind (downgrade #(Ref fs 0) L) (lam _ (labelOfRef fs #(Ref fs 0))))", {0: Lb(L, Lb(H, TRUE))}),
    "read-raises": ("(readRef fs #(Ref fs 0))", {0: Lb(L, Lb(H, TRUE))}),
    "alloc-then-read": ("(bind (newRef fs H (bool true)) (lam r (readRef fs r)))", {}),
    "scoped": ("(withRefs (bag #(Ref fs 0)) (writeRef fs #(Ref fs 0) (unit)))", {0: Lb(L, Lb(L, UNIT))}),
    "label-check": ("(bind (label H (unit)) (lam v (bind (unlabel v) (lam _ (newRef fs L (unit))))))", {}),
}


@pytest.mark.parametrize("name", sorted(HAND))
def test_hand_programs_cosimulate(name):
    src, fs = HAND[name]
    report = cosimulate(p(src), make_state(L, None, fs))
    assert report.match, report.summary()


def test_embedded_program_is_fs_free_and_typechecks():
    sigma = make_state(L, None, {0: Lb(L, Lb(H, TRUE))})
    t = p("(bind (readRef fs #(Ref fs 0)) (lam b (writeRef fs #(Ref fs 0) b)))")
    e, st = embed_term(t, sigma), embed_state(sigma)
    assert has_fs_syntax(t) and not has_fs_syntax(e)
    assert st.mu_fs == {} and st.mode.calculus == "fi"
    typecheck_config(st, e)


def test_state_translation_uses_outer_and_inner_cells():
    sigma = make_state(L, {0: Lb(H, TRUE)}, {1: Lb(L, Lb(H, UNIT))})
    st = embed_state(sigma)
    assert st.mu_fi[0] == Lb(H, TRUE)
    assert st.mu_fi[1] == Lb(L, RefFI(H, 2))
    assert st.mu_fi[2] == Lb(H, UNIT)
    assert st.next_addr == 3


def test_fi_programs_translate_to_themselves():
    t = p("(bind (newRef fi L (bool true)) (lam r (readRef fi r)))")
    assert embed_term(t, make_state()) == t


def test_fresh_binders_avoid_program_names():
    t = p("(lam lc'1 (bind (newRef fs L lc'1) (lam i'2 (return (unit)))))")
    names = {x.var for x in subterms(embed_term(t, make_state())) if hasattr(x, "var")}
    assert len([n for n in names if n == "lc'1"]) == 1


def test_unknown_address_is_rejected():
    with pytest.raises(EmbeddingError):
        embed_term(RefFS(9), make_state())


@settings(max_examples=150)
@given(st.integers(0, 10**6))
def test_random_programs_cosimulate(seed):
    g = gen_program(seed, 4, "fs", cosim=True, max_nodes=40)
    assert size(g.term) <= 40
    report = cosimulate(g.term, g.s1)
    assert report.match or report.inconclusive, report.summary()
