import pytest

GATE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def gate(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    book = request.config.stash.setdefault(GATE_KEY, {})

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
        book[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    book = config.stash.get(GATE_KEY, {})
    if not book:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(book):
        terminalreporter.write_line(book[number])
