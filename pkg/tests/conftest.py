import pytest

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE_LINES[key]
        terminalreporter.write_line(f"{key:>4} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record_criterion():
    def record(key, ok, detail):
        ACCEPTANCE_LINES[key] = (bool(ok), detail)
        print(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record
