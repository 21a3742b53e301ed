import pytest

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion and return ``ok``."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, ok, detail, elapsed=None):
        timing = "" if elapsed is None else f" [{elapsed:.1f} s]"
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}{timing}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
