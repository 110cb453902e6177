import numpy as np
import pytest

from bilincontrol import spectral_core as sc

# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def x_half():
    return sc.preset("x_minus_half")


@pytest.fixture(scope="session")
def x_sq():
    return sc.preset("x_squared")


@pytest.fixture(scope="session")
def two_dir():
    return sc.preset("two_direction")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
