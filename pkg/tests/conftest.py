import numpy as np
import pytest

from eahawkes import HAVE_COMPILED, use_backend

BACKENDS = ["python", "compiled"] if HAVE_COMPILED else ["python"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = use_backend(request.param)
    yield request.param
    use_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_history(rng, m, n, horizon=10.0):
    times = np.sort(rng.uniform(0, horizon, n))
    nodes = rng.integers(0, m, n)
    return times, nodes


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
