"""
services/generator_model.py - Generator descriptions and latent noise models

Holds the portable generator spec (layers, output geometry, noise model),
its JSON file format, and the noise distribution helpers: samplers,
log-densities and typical-set membership/projection.
"""
from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import Tuple

import numpy as np

from services.errors import ConfigError, InvariantViolationError, ShapeMismatchError, SpecParseError
from services.tensor_core import LayerSpec, forward, objective_and_grad
from utils.rng_utils import make_rng

logger = logging.getLogger(__name__)

SPEC_FORMAT = "latentaudit-generator/1"
NOISE_KINDS = ("standard_gaussian", "uniform_box")


@dataclass(frozen=True)
class NoiseDistribution:
    """Latent noise model p(z)."""
    kind: str
    dim: int
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvariantViolationError("noise kind is standard_gaussian or uniform_box", repr(self.kind))
        if int(self.dim) < 1:
            raise InvariantViolationError("noise dim is positive", f"dim={self.dim}")
        if self.kind == "uniform_box" and not self.high > self.low:
            raise InvariantViolationError("hi > lo for uniform_box", f"lo={self.low}, hi={self.high}")

    @classmethod
    def gaussian(cls, dim):
        return cls("standard_gaussian", int(dim))

    @classmethod
    def uniform(cls, dim, low=0.0, high=1.0):
        return cls("uniform_box", int(dim), float(low), float(high))

    @property
    def is_gaussian(self):
        return self.kind == "standard_gaussian"


@dataclass(frozen=True)
class GeneratorSpec:
    """
    A loadable generator G: latent vector -> flat sample.

    Immutable after construction, so one instance can be shared read-only
    by every worker of a batch run.
    """
    latent_dim: int
    layers: Tuple[LayerSpec, ...]
    output_shape: Tuple[int, ...]
    output_range: Tuple[float, float]
    noise: NoiseDistribution

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "output_shape", tuple(int(s) for s in self.output_shape))
        object.__setattr__(self, "output_range", (float(self.output_range[0]), float(self.output_range[1])))
        self.validate()

    @property
    def flat_length(self):
        return int(np.prod(self.output_shape))

    @property
    def peak(self):
        """Peak value M used by PSNR: the width of the output range."""
        return self.output_range[1] - self.output_range[0]

    def validate(self):
        if self.latent_dim < 1:
            raise InvariantViolationError("latent_dim is positive", f"latent_dim={self.latent_dim}")
        if not self.output_range[1] > self.output_range[0]:
            raise InvariantViolationError("M_hi > M_lo", f"output_range={self.output_range}")
        if any(s < 1 for s in self.output_shape):
            raise InvariantViolationError("output_shape extents are positive", f"{self.output_shape}")
        if self.noise.dim != self.latent_dim:
            raise InvariantViolationError(
                "noise dim equals latent_dim", f"noise dim {self.noise.dim}, latent_dim {self.latent_dim}"
            )

        width = self.latent_dim
        first_dense = True
        for index, layer in enumerate(self.layers):
            layer.validate()
            if layer.kind != "dense":
                continue
            if layer.in_width != width:
                invariant = "first dense input width == latent_dim" if first_dense else "layer widths chain"
                raise InvariantViolationError(
                    invariant, f"layer {index} expects input width {layer.in_width}, receives {width}"
                )
            width = layer.out_width
            first_dense = False
        if width != self.flat_length:
            raise InvariantViolationError(
                "final output length == product(output_shape)",
                f"network emits {width}, output_shape {self.output_shape} holds {self.flat_length}",
            )

    def forward(self, z):
        return forward(self.layers, z)

    def objective_and_grad(self, z, target):
        return objective_and_grad(self.layers, z, target)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

def _layer_to_dict(layer):
    if layer.kind == "dense":
        return {
            "kind": "dense",
            "in": int(layer.in_width),
            "out": int(layer.out_width),
            "weight": layer.weight.tolist(),
            "bias": layer.bias.tolist(),
        }
    entry = {"kind": "activation", "activation": layer.activation}
    if layer.slope is not None:
        entry["slope"] = layer.slope
    return entry


def spec_to_dict(spec):
    noise = {"kind": spec.noise.kind}
    if spec.noise.kind == "uniform_box":
        noise["low"] = spec.noise.low
        noise["high"] = spec.noise.high
    return {
        "format": SPEC_FORMAT,
        "latent_dim": spec.latent_dim,
        "noise": noise,
        "output_shape": list(spec.output_shape),
        "output_range": list(spec.output_range),
        "layers": [_layer_to_dict(layer) for layer in spec.layers],
    }


def save_spec(spec, path):
    """
    Write a generator spec as JSON.

    Weights are written as nested arrays of shortest round-trip float reprs,
    so loading the file reproduces every weight bit-exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(spec_to_dict(spec), indent=1) + "\n", encoding="utf-8")
    logger.debug(f"Wrote generator spec to {path}")
    return path


def _require(mapping, key, field, path):
    if not isinstance(mapping, dict):
        raise SpecParseError("expected an object", path=path, field=field)
    if key not in mapping:
        raise SpecParseError(f"missing field '{key}'", path=path, field=field)
    return mapping[key]


def _as_array(values, ndim, field, path):
    try:
        array = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise SpecParseError(f"not a numeric array: {e}", path=path, field=field) from e
    if array.ndim != ndim:
        raise SpecParseError(f"expected a {ndim}-D array, got {array.ndim}-D", path=path, field=field)
    return array


def _layer_from_dict(entry, index, path):
    field = f"layers[{index}]"
    kind = _require(entry, "kind", field, path)
    if kind == "dense":
        weight = _as_array(_require(entry, "weight", field, path), 2, f"{field}.weight", path)
        bias = _as_array(_require(entry, "bias", field, path), 1, f"{field}.bias", path)
        declared = (entry.get("out", weight.shape[0]), entry.get("in", weight.shape[1]))
        if tuple(declared) != weight.shape:
            raise InvariantViolationError(
                "declared layer widths match the weight matrix",
                f"{field} declares {declared[0]}x{declared[1]}, weight is {weight.shape[0]}x{weight.shape[1]}",
            )
        return LayerSpec.dense(weight, bias)
    if kind == "activation":
        return LayerSpec.act(_require(entry, "activation", field, path), entry.get("slope"))
    raise SpecParseError(f"unknown layer kind {kind!r}", path=path, field=f"{field}.kind")


def spec_from_dict(document, path=None):
    fmt = _require(document, "format", "format", path)
    if fmt != SPEC_FORMAT:
        raise SpecParseError(f"unsupported format tag {fmt!r}, expected {SPEC_FORMAT!r}", path=path, field="format")

    latent_dim = _require(document, "latent_dim", "latent_dim", path)
    if not isinstance(latent_dim, int):
        raise SpecParseError("latent_dim must be an integer", path=path, field="latent_dim")

    noise_doc = _require(document, "noise", "noise", path)
    kind = _require(noise_doc, "kind", "noise", path)
    if kind == "standard_gaussian":
        noise = NoiseDistribution.gaussian(latent_dim)
    elif kind == "uniform_box":
        noise = NoiseDistribution.uniform(latent_dim, noise_doc.get("low", 0.0), noise_doc.get("high", 1.0))
    else:
        raise SpecParseError(f"unknown noise kind {kind!r}", path=path, field="noise.kind")

    layers_doc = _require(document, "layers", "layers", path)
    if not isinstance(layers_doc, list):
        raise SpecParseError("layers must be a list", path=path, field="layers")
    layers = [_layer_from_dict(entry, i, path) for i, entry in enumerate(layers_doc)]

    output_shape = _require(document, "output_shape", "output_shape", path)
    if isinstance(output_shape, int):
        output_shape = [output_shape]
    output_range = _require(document, "output_range", "output_range", path)
    if not (isinstance(output_range, list) and len(output_range) == 2):
        raise SpecParseError("output_range must be [min, max]", path=path, field="output_range")

    return GeneratorSpec(
        latent_dim=latent_dim,
        layers=tuple(layers),
        output_shape=tuple(output_shape),
        output_range=(output_range[0], output_range[1]),
        noise=noise,
    )


def load_spec(path):
    """
    Load a generator spec file.

    Args:
        path: Path to a JSON spec written by save_spec (or by hand).

    Returns:
        GeneratorSpec: The validated spec.

    Raises:
        SpecParseError: The file is not valid JSON or a field is missing/malformed.
        InvariantViolationError: The spec parses but breaks an invariant.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecParseError(e.msg, path=path, line=e.lineno) from e
    spec = spec_from_dict(document, path=path)
    logger.info(f"Loaded generator spec {path} (latent_dim={spec.latent_dim}, {len(spec.layers)} layers)")
    return spec


# ---------------------------------------------------------------------------
# Noise model
# ---------------------------------------------------------------------------

def sample_noise(dist, rng_seed, count):
    """
    Draw count latent vectors from p(z).

    Returns:
        np.ndarray: Array of shape (count, dim).
    """
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    return draw_noise(dist, make_rng(rng_seed), count)


def draw_noise(dist, rng, count):
    """Draw count latent vectors from p(z) with an existing numpy Generator."""
    if dist.is_gaussian:
        return rng.standard_normal((count, dist.dim))
    return dist.low + (dist.high - dist.low) * rng.random((count, dist.dim))


def _check_latent(dist, z):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != dist.dim:
        raise ShapeMismatchError(f"latent length {z.shape[-1]} does not match noise dim {dist.dim}")
    return z


def log_density(dist, z):
    """Natural log of p(z); -inf outside the support of a uniform box."""
    z = _check_latent(dist, z)
    if dist.is_gaussian:
        result = -0.5 * dist.dim * math.log(2.0 * math.pi) - 0.5 * np.sum(z * z, axis=-1)
    else:
        inside = np.all((z >= dist.low) & (z <= dist.high), axis=-1)
        result = np.where(inside, -dist.dim * math.log(dist.high - dist.low), -np.inf)
    return float(result) if np.ndim(result) == 0 else result


def typical_radius_sq(dist, delta=0.0):
    radius_sq = dist.dim + delta
    if radius_sq <= 0:
        raise ConfigError(f"typical-set radius is empty: dim {dist.dim} + delta {delta} <= 0")
    return radius_sq


def in_typical_set(dist, z, delta=0.0):
    """Gaussian: ||z||^2 <= dim + delta. Uniform: every coordinate inside the box."""
    z = _check_latent(dist, z)
    if dist.is_gaussian:
        return bool(np.dot(z, z) <= typical_radius_sq(dist, delta))
    return bool(np.all((z >= dist.low) & (z <= dist.high)))


def project_to_typical_set(dist, z, delta=0.0):
    """
    Euclidean projection onto the constraint set.

    Gaussian noise rescales z radially to norm sqrt(dim + delta) when it lies
    outside that ball; uniform noise clamps every coordinate to the box.
    """
    z = _check_latent(dist, z)
    if not dist.is_gaussian:
        return np.clip(z, dist.low, dist.high)
    radius_sq = typical_radius_sq(dist, delta)
    norm_sq = float(np.dot(z, z))
    if norm_sq <= radius_sq:
        return z.copy()
    return z * math.sqrt(radius_sq / norm_sq)
