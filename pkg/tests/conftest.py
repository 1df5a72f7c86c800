import pytest

_RESULTS: list[tuple[str, str, str]] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(status, detail)``; failures are recorded by the hook below."""
    name = request.node.name

    def record(status, detail=""):
        request.node.acceptance_recorded = True
        _RESULTS.append((name, status, detail))

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if "criterion" not in item.fixturenames or getattr(item, "acceptance_recorded", False):
        return
    if rep.when == "call" and rep.failed:
        _RESULTS.append((item.name, "FAIL", str(rep.longrepr).splitlines()[-1][:200]))
    elif rep.skipped and rep.when in ("setup", "call"):
        _RESULTS.append((item.name, "SKIP", str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"{status:4}  {name}  {detail}")
