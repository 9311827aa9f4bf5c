import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def families():
    from textlineseg.synthgen import default_families

    return default_families()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion")
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion id and summary")


_criteria: dict[str, tuple] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = call.excinfo is not None and call.when in ("setup", "call", "teardown")
    prev = _criteria.get(item.nodeid, (number, title, True))
    _criteria[item.nodeid] = (number, title, prev[2] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok in sorted(_criteria.values()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}")
