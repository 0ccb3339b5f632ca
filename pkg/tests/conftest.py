"""Shared fixtures for the test suite."""
from pathlib import Path

import numpy as np
import pytest

from services.fixtures import affine_fixture, cartoon_manifold, identity_fixture, manifold_to_spec
from services.generator_model import NoiseDistribution

REPO_ROOT = Path(__file__).resolve().parent.parent


def assert_feasible(result, dist, delta=0.0):
    """Every constrained solution must lie in the constraint set."""
    if dist.is_gaussian:
        assert result.z_norm_sq <= dist.dim + delta + 1e-9
    else:
        assert np.all(result.z_star >= dist.low) and np.all(result.z_star <= dist.high)


@pytest.fixture
def repo_root():
    return REPO_ROOT


@pytest.fixture(scope="session")
def affine4():
    return affine_fixture(4, 8, seed=7)


@pytest.fixture(scope="session")
def identity4():
    return identity_fixture(4)


@pytest.fixture(scope="session")
def cartoon():
    manifold, targets = cartoon_manifold()
    return manifold, manifold_to_spec(manifold), targets


@pytest.fixture
def gaussian4():
    return NoiseDistribution.gaussian(4)
