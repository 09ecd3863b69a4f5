import numpy as np
import pytest

from binaural_tse.hrtf import synthetic_hrtf_set

_CRITERIA = []


@pytest.fixture(scope="session")
def hrtf():
    return synthetic_hrtf_set()


@pytest.fixture(scope="session")
def coarse_hrtf():
    return synthetic_hrtf_set(azimuth_step=30, elevation_step=30, ir_length=64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
