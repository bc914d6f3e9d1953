import numpy as np
import pytest
from scipy import integrate

ACCEPTANCE_LINES: list = []


def density_cdf(logf, lo=-60.0, hi=60.0, n=24001):
    """CDF of the density proportional to ``exp(logf(x))`` by trapezoidal quadrature on a fine grid."""
    x = np.linspace(lo, hi, n)
    lf = logf(x)
    f = np.exp(lf - lf.max())
    c = integrate.cumulative_trapezoid(f, x, initial=0.0)
    c /= c[-1]
    return lambda t: np.interp(t, x, c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
