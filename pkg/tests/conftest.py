import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from hcrlag.signal_io import SynthSpec, generate_synthetic


def gauss_legendre_01(n: int = 64):
    """Nodes and weights of n-point Gauss-Legendre quadrature on [0, 1]."""
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def synth(channels, length, seed, rate=500.0):
    return generate_synthetic(
        SynthSpec.from_dict({"length": length, "seed": seed, "sample_rate_hz": rate, "channels": channels})
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope="session")
def quad64():
    return gauss_legendre_01(64)


# one "criterion N PASS|FAIL ..." line per acceptance check, echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
