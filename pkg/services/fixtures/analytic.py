"""
services/fixtures/analytic.py - Small closed-form generators

Identity, scaling, constant and two-branch maps. Their perturbation and
hit statistics have closed forms (chi-square for the identity, exact
scaling laws for the others), so they pin down the likelihood estimators.
"""
import numpy as np

from services.generator_model import GeneratorSpec, NoiseDistribution
from services.tensor_core import LayerSpec

DEFAULT_RANGE = (-1.0, 1.0)


def _single_dense(weight, bias, latent_dim, output_range):
    weight = np.asarray(weight, dtype=np.float64)
    return GeneratorSpec(
        latent_dim=latent_dim,
        layers=(LayerSpec.dense(weight, bias),),
        output_shape=(weight.shape[0],),
        output_range=output_range,
        noise=NoiseDistribution.gaussian(latent_dim),
    )


def identity_fixture(dim, output_range=DEFAULT_RANGE):
    """G(z) = z."""
    return _single_dense(np.eye(dim), np.zeros(dim), dim, output_range)


def scaling_fixture(dim, a, output_range=DEFAULT_RANGE):
    """G(z) = a z."""
    return _single_dense(a * np.eye(dim), np.zeros(dim), dim, output_range)


def constant_fixture(dim_in, value, dim_out=None, output_range=DEFAULT_RANGE):
    """G(z) = value for every z."""
    dim_out = dim_in if dim_out is None else dim_out
    return _single_dense(np.zeros((dim_out, dim_in)), np.full(dim_out, float(value)), dim_in, output_range)


def two_branch_fixture(dim, scale, output_range=DEFAULT_RANGE):
    """
    Coordinatewise h(t) = t for t >= 0 and scale * t for t < 0.

    The negative branch is the positive branch stretched by `scale`, so a
    point there is generated with scale**dim times less latent mass.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    eye = np.eye(dim)
    split = LayerSpec.dense(np.vstack([eye, -eye]), np.zeros(2 * dim))
    merge = LayerSpec.dense(np.hstack([eye, -float(scale) * eye]), np.zeros(dim))
    return GeneratorSpec(
        latent_dim=dim,
        layers=(split, LayerSpec.act("relu"), merge),
        output_shape=(dim,),
        output_range=output_range,
        noise=NoiseDistribution.gaussian(dim),
    )
