from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from autocompose import fixtures


@pytest.fixture
def sample_dir(tmp_path: Path) -> Path:
    """A writable copy of the bundled sample fixture files."""
    for name in ("transa.txt", "config.txt", "catalog.txt"):
        shutil.copy(fixtures.path(name), tmp_path / name)
    return tmp_path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
