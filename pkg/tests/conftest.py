"""Shared pytest plumbing: the acceptance suite records one verdict per
criterion and the results are echoed after the terminal summary, outside
output capture."""

ACCEPTANCE_RESULTS = []


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{verdict}] {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
