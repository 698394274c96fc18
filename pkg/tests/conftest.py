import pytest

from rotlab.spectral import TorusGrid

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    number, title = mark.args
    failed = call.excinfo is not None
    measured = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
    prev = _CRITERIA.get(number, (title, True, ""))
    _CRITERIA[number] = (title, prev[1] and not failed, "; ".join(x for x in (prev[2], measured) if x))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, measured = _CRITERIA[number]
        tr.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
        if measured:
            tr.write_line(f"              measured: {measured}")


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32)


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64)

