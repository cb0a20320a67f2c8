"""Shared fixtures and test-run settings."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rlff import AstigmaticLensModel, LFIntrinsics, make_intrinsics

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def std_intr():
    """Standard synthetic rig: 13x13 views, 321x321 pixels, D = 0.1 m."""
    return make_intrinsics()


@pytest.fixture(scope="session")
def identity_intr():
    """Intrinsics whose decode is the identity on [i, j, k, l]."""
    return LFIntrinsics(m=np.eye(5), d=1.0, ni=3, nj=3, nk=64, nl=64)


@pytest.fixture
def toric_model():
    """Axis-aligned refracted model with a 2:1 depth split."""
    return AstigmaticLensModel(
        px=0.01, py=-0.02, pz1=0.5, pz2=1.0, theta1=0.0, theta2=np.pi / 2
    )


@pytest.fixture
def rotated_model():
    """Refracted model with axes rotated 30 degrees off the grid."""
    theta = np.deg2rad(30.0)
    return AstigmaticLensModel(
        px=0.004, py=0.006, pz1=0.4, pz2=0.8,
        theta1=theta, theta2=theta + np.pi / 2,
    )


@pytest.fixture
def lambertian_model():
    """Spherical (degenerate) model: both depths equal."""
    return AstigmaticLensModel(
        px=0.01, py=0.005, pz1=0.75, pz2=0.75, theta1=0.0, theta2=np.pi / 2
    )


def random_model(rng, lo=0.2, hi=2.0, spread=0.05, min_rel_gap=0.0):
    """Draw a random orthogonal-axes model with depths in [lo, hi].

    ``min_rel_gap`` optionally enforces a relative depth separation so the
    axis angles stay well conditioned.
    """
    while True:
        pz = np.sort(rng.uniform(lo, hi, size=2))
        if pz[1] - pz[0] >= min_rel_gap * pz[0]:
            break
    theta = rng.uniform(0.0, np.pi)
    return AstigmaticLensModel(
        px=rng.uniform(-spread, spread),
        py=rng.uniform(-spread, spread),
        pz1=pz[0], pz2=pz[1],
        theta1=theta, theta2=theta + np.pi / 2,
    )
