"""Bundled map specs."""

from __future__ import annotations

from importlib import resources


def fixture_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def fixture_bytes(name: str) -> bytes:
    path = resources.files(__name__) / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled map named {name!r}; have {fixture_names()}")
    return path.read_bytes()
