import pytest

_ACCEPTANCE: list[tuple[str, str, float]] = []
_SETUP_TIME: dict[str, float] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "setup":
        _SETUP_TIME[item.nodeid] = rep.duration
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else "FAIL"
        elapsed = rep.duration + (_SETUP_TIME.get(item.nodeid, 0.0) if rep.when == "call" else 0.0)
        _ACCEPTANCE.append((status, marker.args[0], elapsed))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, duration in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {name}  ({duration:.1f} s)")
