import numpy as np
import pytest

from drlqr.lti import StateSpace

_CRITERIA = []


def random_stable(seed: int, n: int, rho: float = 0.8, d: int = 1, p: int = 1) -> StateSpace:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= rho / max(abs(np.linalg.eigvals(A)))
    return StateSpace(A, rng.standard_normal((n, d)), rng.standard_normal((n, p)))


SCALAR0 = dict(A=[[0.0]], B_u=[[1.0]], B_w=[[1.0]])


def acceptance_systems() -> dict[str, StateSpace]:
    """Systems shared by the acceptance criteria."""
    return {
        "scalar_half": StateSpace([[0.5]], [[1.0]], [[1.0]]),
        "two_state": StateSpace([[0.9, 0.3], [0.0, 0.6]], [[0.0], [1.0]], [[1.0], [0.5]]),
        "rand2": random_stable(1, 2),
        "rand3": random_stable(1, 3),
        "rand4": random_stable(1, 4),
    }


@pytest.fixture
def scalar0():
    return StateSpace(**SCALAR0)


@pytest.fixture
def scalar_half():
    return StateSpace([[0.5]], [[1.0]], [[1.0]])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _CRITERIA.append((marker.args[0], status, marker.args[1], item.name))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, text, name in sorted(_CRITERIA, key=lambda c: (c[0], c[3])):
        terminalreporter.write_line(f"criterion {number:>2} {status}: {text} [{name}]")
