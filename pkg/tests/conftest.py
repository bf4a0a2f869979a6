import numpy as np
import pytest

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # a criterion whose fixture fails never reaches the call phase
    if not (rep.when == "call" or (rep.when == "setup" and rep.failed)):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA.append((number, title, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_CRITERIA):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {number:>2}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
