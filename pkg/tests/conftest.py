"""Collects acceptance verdicts and prints them after the run."""

import contextlib
import sys

import pytest

_VERDICTS: dict[int, tuple[str, str, str]] = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.notes: list[str] = []

    def note(self, text: str) -> None:
        self.notes.append(text)


@contextlib.contextmanager
def _criterion(number: int, title: str):
    c = Criterion(number, title)
    try:
        yield c
    except BaseException as exc:
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        _record(c, "FAIL", "; ".join(c.notes + [reason]))
        raise
    _record(c, "PASS", "; ".join(c.notes))


def _record(c: Criterion, verdict: str, detail: str) -> None:
    _VERDICTS[c.number] = (verdict, c.title, detail)
    line = f"[acceptance {c.number}] {verdict}: {c.title}" + (f" ({detail})" if detail else "")
    print(line, file=sys.stderr)


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[number]
        terminalreporter.write_line(f"{verdict} {number}. {title}" + (f": {detail}" if detail else ""))
