import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    state = {"detail": ""}
    yield state
    rep = getattr(request.node, "rep_call", None)
    if rep is None or rep.skipped:
        status = "SKIP"
    else:
        status = "PASS" if rep.passed else "FAIL"
    line = f"[{status}] {request.node.name}: {state['detail']}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
