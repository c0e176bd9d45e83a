import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oulab import ModelSpec, derive, random_model

settings.register_profile("lab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def classical1():
    return derive(ModelSpec([[-1.0]], [[1.0]], label="classical-1d"))


@pytest.fixture
def jordan():
    return derive(ModelSpec([[-1.0, 1.0], [0.0, -1.0]], np.eye(2), label="jordan"))


@pytest.fixture
def random_dm():
    return derive(random_model(np.random.default_rng(11), 2))


def random_hurwitz(rng, d, scale=1.0):
    G = rng.standard_normal((d, d)) * scale
    shift = max(0.0, np.linalg.eigvals(G).real.max()) + 0.5
    return G - shift * np.eye(d)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
