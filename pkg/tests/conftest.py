import pytest

# One line per acceptance criterion, printed at the end of the run.
_ACCEPTANCE_LINES: list[str] = []
# Result payloads of the acceptance criteria, keyed by criterion number, so the
# determinism criterion can compare them with a rerun.
_PAYLOADS: dict[int, bytes] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def payloads():
    return _PAYLOADS


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
