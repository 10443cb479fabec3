import re

_CRITERION = re.compile(r"test_acceptance\.py::test_c(\d+)_(\w+)")
_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key, name = int(m.group(1)), m.group(2).replace("_", " ")
    if report.when == "call" or report.failed or report.skipped:
        prev = _results.get(key)
        if prev is None or prev[0] == "PASS":
            _results[key] = ("PASS" if report.passed else "FAIL", name)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        status, name = _results[key]
        terminalreporter.write_line(f"{status}  criterion {key:2d}: {name}")
