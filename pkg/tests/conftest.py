import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nldeim import datasets
from nldeim.simpqr import PatchSet

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("repo")


def orthonormal(rng, n, r):
    q, rr = np.linalg.qr(rng.standard_normal((n, r)))
    return q * np.sign(np.diag(rr))


def random_patchset(rng, n, r, K):
    return PatchSet(tuple(orthonormal(rng, n, r) for _ in range(K)))


def sample_patchset(sample):
    return PatchSet(tuple(sample.tangents), sample.points)


@pytest.fixture(scope="session")
def spiral():
    return datasets.gen_spiral(1000, seed=0)


@pytest.fixture(scope="session")
def cylinder():
    return datasets.gen_cylinder(1000, seed=0)


@pytest.fixture(scope="session")
def surface10():
    return datasets.gen_surface10(1000, seed=0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
