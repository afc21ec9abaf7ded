import sys
from pathlib import Path

# Let test modules import the shared oracles.
sys.path.insert(0, str(Path(__file__).parent))

# Acceptance verdicts, printed once at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
