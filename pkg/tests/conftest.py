import re

# criterion number -> detail line, filled in by tests/test_acceptance.py
ACCEPTANCE: dict = {}

_NAME = re.compile(r"test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(key, []):
            m = _NAME.search(getattr(rep, "nodeid", ""))
            if m and rep.when == "call" or (m and key in ("error", "skipped")):
                outcomes[int(m.group(1))] = "PASS" if key == "passed" else ("SKIP" if key == "skipped" else "FAIL")
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        detail = ACCEPTANCE.get(n, "no result recorded")
        terminalreporter.write_line(f"criterion {n:2d}: {outcomes[n]}  {detail}")
