import pytest

# criterion number -> list of (passed, detail); filled by test_acceptance.
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
        return passed
    return _record


def acceptance_lines():
    lines = []
    for criterion in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[criterion]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        lines.append(f"criterion {criterion}: {status} | " + "; ".join(d for _, d in parts))
    return lines


def pytest_terminal_summary(terminalreporter):
    lines = acceptance_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
