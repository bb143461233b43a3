import pytest

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class AcceptanceLog:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, number: int, title: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (bool(passed), f"{title}: {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, line = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {line}")
