"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

import pytest
from hypothesis import settings

settings.register_profile("photonbath", deadline=None)
settings.load_profile("photonbath")

_CRITERIA: dict = {}


@pytest.fixture
def detail(request):
    """Attach a short measured-value note to the current criterion test."""
    notes = []
    request.node.criterion_notes = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry = _CRITERIA.setdefault(mark.args[0], {"ok": True, "notes": []})
        entry["ok"] &= rep.passed
        entry["notes"].extend(getattr(item, "criterion_notes", []))
        if not rep.passed:
            entry["notes"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        entry = _CRITERIA[n]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  " + "; ".join(entry["notes"]))
