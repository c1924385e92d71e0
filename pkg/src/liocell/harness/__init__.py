"""Non-interference testing: erasure, program generation, trials and attacks."""

from .erasure import erase, erase_config, erase_sched, erase_state, erase_term, l_equiv
from .generator import GenConfig, Generated, gen_program, shrink
from .trials import Verdict, tini_trial, tsni_trial
from .corpus import Attack, AttackResult, attack_corpus, run_attack

__all__ = [
    "Attack",
    "AttackResult",
    "GenConfig",
    "Generated",
    "Verdict",
    "attack_corpus",
    "erase",
    "erase_config",
    "erase_sched",
    "erase_state",
    "erase_term",
    "gen_program",
    "l_equiv",
    "run_attack",
    "shrink",
    "tini_trial",
    "tsni_trial",
]
