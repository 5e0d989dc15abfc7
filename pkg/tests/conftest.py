import pytest

from tdmqkd.link_model import LinkParams


@pytest.fixture
def link20():
    """Experimental defaults, chip routed to user 1, 20 km."""
    return LinkParams(user=1).at_length(20.0)


@pytest.fixture(params=[1, 2, 3, 4])
def user(request):
    return request.param


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance(request):
    """Record the one-line verdict of an acceptance criterion.

    Call ``acceptance(n, ok, detail)``; the line is printed immediately and
    again in the terminal summary.
    """

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
