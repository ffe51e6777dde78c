import re


def pytest_terminal_summary(terminalreporter):
    """One ``criterion N: PASS/FAIL`` line per acceptance test."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and (rep.when == "call" or outcome != "passed"):
                status = "PASS" if outcome == "passed" else "FAIL"
                lines[int(m.group(1))] = f"criterion {int(m.group(1))}: {status} ({rep.duration:.1f} s)"
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
