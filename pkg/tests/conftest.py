import json
from pathlib import Path

import pytest

from beliefbench import BeliefAnnotation, parse_label, parse_source_path

FIXTURES = Path(__file__).parent / "fixtures"


def ann(source: str, event: str, label: str) -> BeliefAnnotation:
    """Shorthand triple builder used across the suite."""
    return BeliefAnnotation(
        source=parse_source_path(source),
        event=event,
        label=parse_label(label),
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def toy_corpus_path() -> Path:
    return FIXTURES / "toy_corpus.jsonl"


@pytest.fixture
def e2e_dir() -> Path:
    return FIXTURES / "e2e"


@pytest.fixture
def norm_dir() -> Path:
    return FIXTURES / "norm"


def write_jsonl(path: Path, rows: list) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


# One line per acceptance criterion, echoed in the terminal summary so the
# pass/fail verdicts stay visible even with output capture on.
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
