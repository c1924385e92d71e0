"""Bundled example programs (``*.lio`` terms and ``*.imp`` policy programs)."""

from importlib import resources


def program_names(suffix: str = "") -> list:
    return sorted(p.name for p in resources.files(__name__).iterdir() if p.name.endswith(suffix) and not p.name.startswith("_"))


def program_source(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text()
