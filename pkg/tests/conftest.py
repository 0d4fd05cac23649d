import pytest

_outcomes = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        label = mark.args[0]
        if hasattr(item, "callspec"):
            label += f"[{item.callspec.id}]"
        _outcomes.append((label, mark.args[1], rep.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for label, text, verdict in _outcomes:
        terminalreporter.write_line(f"criterion {label:<6} {verdict:<7} {text}")
