"""Print one PASS/FAIL line per acceptance criterion at the end of the run."""
import re

_RESULTS = {}
_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.failed:
        props = ", ".join(f"{k}={v}" for k, v in report.user_properties)
        _RESULTS[key] = ("PASS" if report.passed else "FAIL", props)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), (status, props) in sorted(_RESULTS.items()):
        label = name.replace("_", " ")
        terminalreporter.write_line(f"criterion {num} [{status}] {label}" + (f" ({props})" if props else ""))
