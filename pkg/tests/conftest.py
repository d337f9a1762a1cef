import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")
_outcomes = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    ok = report.passed or (report.when != "call" and report.outcome == "passed")
    if report.failed:
        ok = False
    if report.when == "call" or report.failed:
        _outcomes[n] = _outcomes.get(n, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        verdict = "PASS" if _outcomes[n] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE criterion {n}: {verdict}")
