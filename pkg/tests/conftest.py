import numpy as np
import pytest

from ar1risk.model import ModelParams

# verdict lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture
def ref_params():
    """alpha=0.6, mu=0.8, sigma2=0.4, theta=0.5 (stationary ln-intensity mean 2)."""
    return ModelParams(0.6, 0.8, 0.4, 0.5)


@pytest.fixture
def mild_params():
    return ModelParams(0.3, 0.2, 0.2, 0.5)


@pytest.fixture
def degenerate_params():
    """Lambda identically 1."""
    return ModelParams(0.0, 0.0, 0.0, 1.0)


def independent_S(params, t, reps, seed):
    """Oracle draws of S_t: Y from its stationary law, S | N ~ Gamma(N, theta).

    Shares nothing with the package simulator (gamma sums instead of
    inverted exponentials, a separate generator).
    """
    rng = np.random.default_rng(seed)
    law = params.law
    y = rng.normal(law.mean_y, law.sd_y, reps)
    n = rng.poisson(np.exp(y) + t)
    s = np.zeros(reps)
    pos = n > 0
    s[pos] = rng.gamma(n[pos], params.theta)
    return s


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
