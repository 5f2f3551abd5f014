import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        summary = dict(report.user_properties).get("summary", "")
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _results[int(m.group(1))] = (status, m.group(2), summary)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, name, summary = _results[n]
        terminalreporter.write_line(f"criterion {n} [{name}]: {status}  {summary}")
