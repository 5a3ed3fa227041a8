"""Bundled problem files."""

from importlib.resources import files
from pathlib import Path


def path(name: str) -> Path:
    """Filesystem path of a bundled problem, e.g. ``path("sqrtx_order3")``."""
    if not name.endswith(".json"):
        name = name + ".json"
    p = files(__package__) / name
    return Path(str(p))


def available() -> list[str]:
    return sorted(p.stem for p in Path(str(files(__package__))).glob("*.json"))
