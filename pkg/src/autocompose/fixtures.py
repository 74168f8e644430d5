"""Bundled copies of the electronics-catalog case study files."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

NAMES = ("transa.txt", "config.txt", "catalog.txt", "rules.txt")


def path(name: str) -> Path:
    if name not in NAMES:
        raise KeyError(name)
    return Path(str(resources.files("autocompose") / "data" / name))
