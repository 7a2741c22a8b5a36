"""Per-criterion PASS/FAIL lines for the acceptance suite."""

_criteria = {}   # number -> title
_outcomes = {}   # number -> list of bools


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test verifies")


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            number, title = m.args
            _criteria[number] = title
            item.user_properties.append(("criterion", number))


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    if report.when == "call" or report.failed:
        _outcomes.setdefault(number, []).append(report.passed and not report.skipped)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        runs = _outcomes.get(number)
        if not runs:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(runs) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {_criteria[number]}")
