"""
services/fixtures/affine.py - Affine generators G(z) = A z + b

A has orthonormal columns scaled per axis, so least-squares inversion has a
closed form and serves as the inversion oracle.
"""
from dataclasses import dataclass
import logging

import numpy as np

from services.generator_model import GeneratorSpec, NoiseDistribution
from services.tensor_core import LayerSpec
from utils.rng_utils import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AffineFixture:
    """An affine generator together with its matrix, offset and column scales."""
    spec: GeneratorSpec
    weight: np.ndarray
    offset: np.ndarray
    scales: np.ndarray

    def generate(self, z):
        return self.spec.forward(z)

    def least_squares(self, x):
        """Closed-form minimizer diag(1/s^2) A^T (x - b) of ||A z + b - x||^2."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return (self.weight.T @ (x - self.offset)) / (self.scales * self.scales)


def affine_fixture(dim_in, dim_out, seed, conditioning=1.0, output_range=(-1.0, 1.0), offset_scale=0.1):
    """
    Build a random affine generator with orthonormal, per-axis scaled columns.

    Args:
        dim_in (int): Latent dimension.
        dim_out (int): Output length, at least dim_in.
        seed (int): Seed for the orthonormal basis and the offset.
        conditioning: One scale for every axis or a sequence of dim_in scales.
        output_range (tuple): Declared output range (sets the PSNR peak).
        offset_scale (float): Standard deviation of the offset entries.

    Returns:
        AffineFixture: Spec plus recorded A, b and scales.
    """
    if dim_out < dim_in:
        raise ValueError(f"dim_out ({dim_out}) must be at least dim_in ({dim_in})")
    scales = np.broadcast_to(np.asarray(conditioning, dtype=np.float64), (dim_in,)).copy()
    if np.any(scales <= 0):
        raise ValueError("conditioning scales must be positive")

    rng = make_rng(seed)
    basis, upper = np.linalg.qr(rng.standard_normal((dim_out, dim_in)))
    basis = basis * np.where(np.diag(upper) < 0, -1.0, 1.0)
    weight = basis * scales
    offset = offset_scale * rng.standard_normal(dim_out)

    spec = GeneratorSpec(
        latent_dim=dim_in,
        layers=(LayerSpec.dense(weight, offset),),
        output_shape=(dim_out,),
        output_range=output_range,
        noise=NoiseDistribution.gaussian(dim_in),
    )
    logger.debug(f"Built affine fixture {dim_in}->{dim_out} (seed {seed}, scales {scales.tolist()})")
    return AffineFixture(spec=spec, weight=weight, offset=offset, scales=scales)
