from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from acmg.game import load_game

CORPUS_DIR = Path(str(resources.files("acmg") / "corpus"))
CORPUS = sorted(p.stem for p in CORPUS_DIR.glob("*.json"))

# criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def corpus_game(name: str):
    return load_game(CORPUS_DIR / f"{name}.json")


@pytest.fixture(scope="session")
def corpus():
    return {name: corpus_game(name) for name in CORPUS}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title} ({detail})")
