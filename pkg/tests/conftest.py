import numpy as np
import pytest

from chordarc.approximant import build_level, choose_C1
from chordarc.cli import PIPELINE_EXTENSION
from chordarc.extension import PseudoharmonicExtension
from chordarc.geometry import segment_curve
from chordarc.modulus import PowerModulus, builtin_boundary


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def segment():
    return segment_curve()


@pytest.fixture(scope="session")
def sqrt_modulus():
    return PowerModulus(0.5)


@pytest.fixture(scope="session")
def abs_sqrt(segment):
    return builtin_boundary(segment, "abs_sqrt")


@pytest.fixture(scope="session")
def pipeline_ext(segment, abs_sqrt, sqrt_modulus):
    """Extension with the pipeline's ray settings."""
    return PseudoharmonicExtension(segment, abs_sqrt, sqrt_modulus, **PIPELINE_EXTENSION)


@pytest.fixture(scope="session")
def default_ext(segment, abs_sqrt, sqrt_modulus):
    return PseudoharmonicExtension(segment, abs_sqrt, sqrt_modulus)


@pytest.fixture(scope="session")
def approximants(pipeline_ext, segment):
    """Level 3, 4, 5 approximants of |x|^(1/2) on the segment, built once."""
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_level(pipeline_ext, n, C1=choose_C1(segment, n))
        return cache[n]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
