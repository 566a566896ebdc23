import pytest

_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Record one acceptance line; returns ``ok`` so the caller can assert on it."""

    def _report(k: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title} ({detail})"
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
