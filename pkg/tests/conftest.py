"""Collects one pass/fail line per acceptance criterion and prints them at the
end of the session."""

import pytest

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "result": None, "details": []})
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            entry["result"] = "FAIL (expected failure: " + rep.wasxfail + ")"
        elif rep.skipped:
            entry["result"] = "SKIPPED"
        else:
            entry["result"] = "PASS" if rep.passed else "FAIL"
        entry["details"] = [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        tr.write_line(f"criterion {number:2d} {entry['title']}: {entry['result'] or 'NOT RUN'}")
        for d in entry["details"]:
            tr.write_line(f"    {d}")
