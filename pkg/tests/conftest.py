"""Collects outcomes of tests marked ``criterion(k, title)`` and prints one line per criterion."""
from __future__ import annotations

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "ran": False, "notes": []})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["ok"] = False
        msg = str(report.longrepr).strip().splitlines()
        errors = [line for line in msg if line.startswith("E ")]
        if errors:
            entry["notes"].append(errors[0][1:].strip())


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        e = _RESULTS[number]
        status = "PASS" if e["ok"] and e["ran"] else ("SKIP" if e["ok"] else "FAIL")
        line = f"criterion {number:2d} {status}: {e['title']}"
        if e["notes"]:
            line += f" [{e['notes'][0][:160]}]"
        terminalreporter.write_line(line)
