import numpy as np
import pytest

from gantrysim import GantryParams, KinematicLimits, build_ideal_profile, torque_profile


@pytest.fixture(scope="session")
def params():
    return GantryParams()


@pytest.fixture(scope="session")
def profile():
    return build_ideal_profile(KinematicLimits())


@pytest.fixture(scope="session")
def drive(params, profile):
    return torque_profile(profile, params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the test using it; printed at the end of the run."""
    lines = []
    yield lines.append
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    detail = "; ".join(lines)
    _VERDICTS.append(f"{status} {request.node.name}{': ' + detail if detail else ''}")


@pytest.hookimpl(wrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
