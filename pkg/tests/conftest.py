"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary."""

from collections import defaultdict

import pytest

_outcomes: dict[int, list[bool]] = defaultdict(list)
_titles: dict[int, str] = {}
_notes: dict[int, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test belongs to an acceptance criterion")


def _criterion(item):
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return None
    number, title = mark.args
    _titles[number] = title
    return number


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = _criterion(item)
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[number].append(report.passed)


@pytest.fixture
def note(request):
    """``note(text)`` attaches a measurement to the test's criterion line."""
    number = _criterion(request.node)

    def add(text: str) -> None:
        if number is not None:
            _notes[number].append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        status = "PASS" if all(_outcomes[number]) else "FAIL"
        detail = "; ".join(_notes[number])
        line = f"[{status}] {number}. {_titles[number]}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
