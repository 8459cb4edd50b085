def pytest_terminal_summary(terminalreporter):
    """Echo the per-criterion pass/fail lines collected by the acceptance
    tests, which normal output capture would otherwise hide."""
    try:
        from test_acceptance import REPORT_LINES
    except ImportError:
        return
    if REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT_LINES):
            terminalreporter.write_line(line)
