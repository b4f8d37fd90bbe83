CRITERION_PREFIX = "test_acceptance.py::test_criterion"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if CRITERION_PREFIX not in nodeid or getattr(report, "when", "call") != "call":
                continue
            results[nodeid.split("::")[-1]] = outcome == "passed"
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results):
        verdict = "PASS" if results[name] else "FAIL"
        terminalreporter.write_line(f"{name}: {verdict}")
