import re

import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion and fail the test if it
    was not met.  ``criterion(n, ok, detail)``."""

    def record(number, ok, detail):
        _RESULTS[number] = (bool(ok), detail)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print(f"\n{line}", flush=True)
        assert ok, line

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)", item.name)
    if m and rep.when == "call" and rep.failed:
        number = int(m.group(1))
        if number not in _RESULTS:
            _RESULTS[number] = (False, f"error: {call.excinfo.typename}: {call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, detail = _RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}")
