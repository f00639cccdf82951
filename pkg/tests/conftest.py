import os
import sys

from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    ok = call.excinfo is None
    detail = dict(item.user_properties).get("detail", "")
    prev = _CRITERIA.setdefault(mark.args[0], [True, []])
    prev[0] = prev[0] and ok
    prev[1].append(f"{item.name}{': ' + detail if detail else ''}{'' if ok else ' [failed]'}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, notes = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}")
        for note in notes:
            terminalreporter.write_line(f"    {note}")
