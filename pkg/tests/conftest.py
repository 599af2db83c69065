import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "ran": False, "notes": []})
    if report.when == "call":
        entry["ran"] = True
        entry["notes"].extend(v for k, v in item.user_properties if k == "measured")
    if report.failed or (report.when == "setup" and report.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        tr.write_line(f"criterion {number:>2} {status}  {e['title']}")
        for note in e["notes"]:
            tr.write_line(f"              {note}")
