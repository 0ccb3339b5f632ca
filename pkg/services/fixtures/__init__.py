"""
services/fixtures - Analytic generators with known ground truth

Affine maps, piecewise-linear manifolds, random MLPs and small closed-form
generators used as oracles by the estimators' tests and by the `fixtures`
command.
"""
from services.fixtures.affine import AffineFixture, affine_fixture
from services.fixtures.analytic import constant_fixture, identity_fixture, scaling_fixture, two_branch_fixture
from services.fixtures.bundle import write_fixture_bundle
from services.fixtures.manifold import (
    PiecewiseLinearManifold,
    brute_force_ball_probability,
    cartoon_manifold,
    exact_ball_probability,
    manifold_to_spec,
)
from services.fixtures.mlp import random_mlp_fixture

__all__ = [
    "AffineFixture",
    "PiecewiseLinearManifold",
    "affine_fixture",
    "brute_force_ball_probability",
    "cartoon_manifold",
    "constant_fixture",
    "exact_ball_probability",
    "identity_fixture",
    "manifold_to_spec",
    "random_mlp_fixture",
    "scaling_fixture",
    "two_branch_fixture",
    "write_fixture_bundle",
]
