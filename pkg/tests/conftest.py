import pytest

RESULTS: list[tuple[str, str, str]] = []


def record(tag: str, status: str, detail: str = "") -> None:
    RESULTS.append((tag, status, detail))
    print(f"{tag}: {status} {detail}".rstrip())


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for tag, status, detail in RESULTS:
        terminalreporter.write_line(f"{status:4s} {tag}  {detail}")
