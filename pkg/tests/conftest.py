import re

CRITERIA = {
    "1": "honest-run soundness",
    "2": "intercept-resend detection",
    "3": "measure-resend profile",
    "4": "undetectable-attack property suite",
    "5": "efficiency",
    "6": "basis-math invariants",
    "7": "determinism",
}

_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_", report.nodeid)
    if not m:
        return
    key = m.group(1)
    if report.failed:
        _outcomes[key] = "FAIL"
    elif report.when == "call" and report.passed:
        _outcomes.setdefault(key, "PASS")
    elif report.skipped:
        _outcomes.setdefault(key, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key, name in CRITERIA.items():
        if key in _outcomes:
            terminalreporter.write_line(f"criterion {key} ({name}): {_outcomes[key]}")
