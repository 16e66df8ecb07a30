import numpy as np
import pytest

from aldrm import _kernels as K


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=K.available_backends())
def kernel_backend(request):
    with K.backend(request.param):
        yield request.param


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  [{detail}]"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
