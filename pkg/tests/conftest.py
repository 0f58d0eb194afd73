import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("cskl", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cskl")


@pytest.fixture
def rs():
    return np.random.default_rng(20240611)


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_orthogonal(rs, d):
    q, r = np.linalg.qr(rs.standard_normal((d, d)))
    return q * np.sign(np.diag(r))
