"""
services/fixtures/mlp.py - Random-weight MLP generators for smoke tests
"""
import logging

import numpy as np

from services.generator_model import GeneratorSpec, NoiseDistribution
from services.tensor_core import LayerSpec
from utils.rng_utils import make_rng

logger = logging.getLogger(__name__)


def random_mlp_fixture(dim_in, widths, seed, hidden_activation="relu", output_range=(-1.0, 1.0)):
    """
    Random MLP: dense layers with N(0, 2/fan_in) weights, a tanh output
    squashed into output_range by a final diagonal dense layer.

    Args:
        dim_in (int): Latent dimension.
        widths (list): Output widths of the dense layers; the last is the sample length.
        seed (int): Weight seed.
        hidden_activation (str): Activation between hidden layers.
        output_range (tuple): (low, high) range of the output.

    Returns:
        GeneratorSpec: Gaussian-noise generator.
    """
    if not widths:
        raise ValueError("widths must name at least the output width")
    rng = make_rng(seed)
    layers = []
    fan_in = dim_in
    for index, width in enumerate(widths):
        weight = rng.standard_normal((width, fan_in)) * np.sqrt(2.0 / fan_in)
        bias = 0.1 * rng.standard_normal(width)
        layers.append(LayerSpec.dense(weight, bias))
        last = index == len(widths) - 1
        layers.append(LayerSpec.act("tanh" if last else hidden_activation))
        fan_in = width

    low, high = float(output_range[0]), float(output_range[1])
    half = 0.5 * (high - low)
    layers.append(LayerSpec.dense(half * np.eye(fan_in), np.full(fan_in, low + half)))

    return GeneratorSpec(
        latent_dim=dim_in,
        layers=tuple(layers),
        output_shape=(fan_in,),
        output_range=(low, high),
        noise=NoiseDistribution.gaussian(dim_in),
    )
