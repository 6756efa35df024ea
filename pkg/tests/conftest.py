import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--smoke", action="store_true", default=False,
                     help="run the acceptance power studies at the smoke tier "
                          "(20 replicates, 19 permutations)")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
