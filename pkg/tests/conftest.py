import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# filled by test_acceptance; one (criterion, status, detail) entry per check
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(ACCEPTANCE, key=lambda r: (len(r[0]), r[0])):
        terminalreporter.write_line(f"criterion {name}: {status}  {detail}")
