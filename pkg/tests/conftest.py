import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from moltrack import build_augmented, bundled_model

settings.register_profile(
    "default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sis():
    return bundled_model("sis")


@pytest.fixture(scope="session")
def sis_aug(sis):
    return build_augmented(sis.network, sis.schema)


@pytest.fixture(scope="session")
def si():
    return bundled_model("si")


def si_closed_form(t, beta=1.0, rho=0.01):
    t = np.asarray(t, dtype=float)
    return (1 + rho) / (1 + rho * np.exp(beta * (1 + rho) * t))
