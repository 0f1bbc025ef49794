import pytest

_RESULTS = {}
_NOTES = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict: criterion(number, passed, detail)."""

    def record(number, passed, detail):
        _RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    def note(text):
        """Informational line shown under the verdicts, never asserted."""
        _NOTES.append(text)
        print(text)

    record.note = note
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        passed, detail = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    for text in _NOTES:
        terminalreporter.write_line(f"note: {text}")
