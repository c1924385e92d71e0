from .parser import KEYWORDS, ParseError, parse_file, parse_program
from .pretty import pretty, truncate
from .terms import *  # noqa: F401,F403
from .types import TypeCheckError, store_typing, typecheck, typecheck_config

__all__ = [
    "KEYWORDS",
    "ParseError",
    "TypeCheckError",
    "parse_file",
    "parse_program",
    "pretty",
    "store_typing",
    "truncate",
    "typecheck",
    "typecheck_config",
]
