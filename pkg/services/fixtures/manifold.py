"""
services/fixtures/manifold.py - Piecewise-linear 1-D manifolds

A manifold maps z in [0, 1] onto a polyline: segment i sends
[z_i, z_{i+1}] affinely onto the chord between vertices i and i+1. A
zero-length chord is a point mass carrying the z-measure of its interval.
Outside [0, 1] the end segments are extended linearly.
"""
from dataclasses import dataclass
import logging
import math
from typing import Tuple

import numpy as np

from services.errors import InvariantViolationError
from services.generator_model import GeneratorSpec, NoiseDistribution
from services.tensor_core import LayerSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearManifold:
    breakpoints: Tuple[float, ...]
    vertices: np.ndarray

    def __post_init__(self):
        breakpoints = tuple(float(b) for b in self.breakpoints)
        vertices = np.array(self.vertices, dtype=np.float64)
        if len(breakpoints) < 2 or breakpoints[0] != 0.0 or breakpoints[-1] != 1.0:
            raise InvariantViolationError("breakpoints start at 0 and end at 1", f"{breakpoints}")
        if any(b <= a for a, b in zip(breakpoints, breakpoints[1:])):
            raise InvariantViolationError("breakpoints strictly increasing", f"{breakpoints}")
        if vertices.ndim != 2 or vertices.shape[0] != len(breakpoints):
            raise InvariantViolationError(
                "one vertex per breakpoint", f"{len(breakpoints)} breakpoints, vertices {vertices.shape}"
            )
        vertices.setflags(write=False)
        object.__setattr__(self, "breakpoints", breakpoints)
        object.__setattr__(self, "vertices", vertices)

    @property
    def output_dim(self):
        return self.vertices.shape[1]

    @property
    def segment_count(self):
        return len(self.breakpoints) - 1

    def slopes(self):
        """Velocity dG/dz of each segment, shape (segments, output_dim)."""
        widths = np.diff(np.asarray(self.breakpoints))
        return np.diff(self.vertices, axis=0) / widths[:, None]

    def speeds(self):
        return np.linalg.norm(self.slopes(), axis=1)

    def point_mass_segments(self):
        return [i for i, speed in enumerate(self.speeds()) if speed == 0.0]

    def evaluate(self, z):
        """G(z) for scalar or 1-D z, with linear extension outside [0, 1]."""
        z = np.asarray(z, dtype=np.float64)
        flat = z.reshape(-1)
        slopes = self.slopes()
        out = np.stack([np.interp(flat, self.breakpoints, self.vertices[:, k]) for k in range(self.output_dim)], axis=1)
        below, above = flat < 0.0, flat > 1.0
        out[below] = self.vertices[0] + flat[below, None] * slopes[0]
        out[above] = self.vertices[-1] + (flat[above, None] - 1.0) * slopes[-1]
        return out[0] if z.ndim == 0 else out

    def point_at(self, segment, fraction):
        """Vertex-interpolated point at the given fraction along a segment."""
        z = self.breakpoints[segment] + fraction * (self.breakpoints[segment + 1] - self.breakpoints[segment])
        return z, self.evaluate(z)


def manifold_to_spec(manifold, output_range=(0.0, 1.0)):
    """
    Realize a manifold as a relu network on a 1-D uniform latent.

    G(z) = v_0 + m_0 (relu(z) - relu(-z)) + sum_k (m_k - m_{k-1}) relu(z - z_k)
    over the interior breakpoints z_k, which reproduces the polyline and its
    linear extensions.
    """
    slopes = manifold.slopes()
    interior = manifold.breakpoints[1:-1]
    hidden = 2 + len(interior)

    first_weight = np.ones((hidden, 1))
    first_weight[1, 0] = -1.0
    first_bias = np.concatenate([[0.0, 0.0], -np.asarray(interior, dtype=np.float64)])

    columns = [slopes[0], -slopes[0]] + [slopes[k] - slopes[k - 1] for k in range(1, manifold.segment_count)]
    second_weight = np.stack(columns, axis=1)

    return GeneratorSpec(
        latent_dim=1,
        layers=(
            LayerSpec.dense(first_weight, first_bias),
            LayerSpec.act("relu"),
            LayerSpec.dense(second_weight, manifold.vertices[0]),
        ),
        output_shape=(manifold.output_dim,),
        output_range=output_range,
        noise=NoiseDistribution.uniform(1, 0.0, 1.0),
    )


def exact_ball_probability(manifold, x_center, mse_ceiling):
    """
    Exact z-measure (z uniform on [0, 1]) of {z : MSE(G(z), x_center) < mse_ceiling}.

    On each segment ||v_i + m_i t - c||^2 < D * mse_ceiling is a quadratic
    inequality in t, solved in closed form and clipped to the segment.
    """
    center = np.asarray(x_center, dtype=np.float64).reshape(-1)
    radius_sq = manifold.output_dim * mse_ceiling
    slopes = manifold.slopes()
    total = 0.0
    for i in range(manifold.segment_count):
        width = manifold.breakpoints[i + 1] - manifold.breakpoints[i]
        offset = manifold.vertices[i] - center
        a = float(np.dot(slopes[i], slopes[i]))
        c = float(np.dot(offset, offset)) - radius_sq
        if a == 0.0:
            if c < 0.0:
                total += width
            continue
        b = float(np.dot(slopes[i], offset))
        disc = b * b - a * c
        if disc <= 0.0:
            continue
        root = math.sqrt(disc)
        low, high = (-b - root) / a, (-b + root) / a
        total += max(0.0, min(high, width) - max(low, 0.0))
    return total


def brute_force_ball_probability(manifold, x_center, mse_ceiling, points=10_000_000, chunk=1_000_000):
    """Midpoint-grid estimate of exact_ball_probability."""
    center = np.asarray(x_center, dtype=np.float64).reshape(1, -1)
    hits = 0
    for start in range(0, points, chunk):
        z = (np.arange(start, min(points, start + chunk)) + 0.5) / points
        diff = manifold.evaluate(z) - center
        hits += int(np.count_nonzero(np.einsum("ij,ij->i", diff, diff) / manifold.output_dim < mse_ceiling))
    return hits / points


CARTOON_VERTICES = (
    (0.20, 0.50),
    (0.25, 0.55),
    (0.27, 0.58),
    (0.45, 0.70),
    (0.45, 0.70),
    (0.55, 0.65),
    (0.70, 0.40),
    (0.75, 0.35),
    (0.80, 0.33),
    (0.92, 0.25),
    (0.95, 0.22),
)


def cartoon_manifold():
    """
    Ten-segment 2-D cartoon with one point-mass segment (z in [0.3, 0.4]).

    Returns:
        tuple: (PiecewiseLinearManifold, dict of named targets). Targets:
        cyan at the middle of a short segment, purple at the middle of a long
        segment, orange next to the point mass, red far from everything and
        green on the linear extension below z = 0 (z = -0.2).
    """
    manifold = PiecewiseLinearManifold(
        breakpoints=tuple(round(0.1 * k, 10) for k in range(11)),
        vertices=np.array(CARTOON_VERTICES),
    )
    targets = {
        "cyan": np.array([0.26, 0.565]),
        "purple": np.array([0.625, 0.525]),
        "orange": np.array([0.45, 0.75]),
        "red": np.array([0.85, 0.80]),
        "green": np.array([0.10, 0.40]),
    }
    return manifold, targets
