import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levy_lab.measures import DiscreteMeasure, ModelSpace

settings.register_profile(
    "levy",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
    derandomize=True,
)
settings.load_profile("levy")


def random_discrete(rng, d=3, n=5, p=2.0, grid=False, scale=0.6):
    space = ModelSpace.grid(rng.uniform(0.3, 2.0, d), p) if grid else ModelSpace.sequence(d, p)
    atoms = rng.normal(size=(n, d)) * scale
    return DiscreteMeasure(space, atoms, rng.uniform(0.1, 1.0, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
