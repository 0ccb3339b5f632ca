"""
services/inversion.py - Latent inversion of a generator

Finds the latent vector whose generated sample best matches a target,
either unconstrained or restricted to the typical set of the noise model,
and runs the restart / interpolation / typical-set experiments built on it.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from services.adam import Adam
from services.errors import ConfigError, DivergenceError, InterpolationError, ShapeMismatchError
from services.generator_model import (
    in_typical_set,
    log_density,
    project_to_typical_set,
    sample_noise,
    typical_radius_sq,
)
from utils.metrics import mse, psnr_from_mse
from utils.report_utils import emit_histogram, shared_edges

logger = logging.getLogger(__name__)


class InversionConfig(BaseModel):
    """Optimizer and constraint settings for one inversion."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_iterations: int = 3000
    stop_tolerance: float = 0.1
    stop_window: int = 50
    constrained: bool = False
    delta: float = 0.0
    restarts: int = 1
    init_scheme: Literal["noise_draw", "zeros", "provided"] = "noise_draw"

    @field_validator("learning_rate")
    @classmethod
    def _positive_rate(cls, value):
        if not value > 0:
            raise ValueError("learning_rate must be > 0")
        return value

    @field_validator("beta1", "beta2")
    @classmethod
    def _beta_range(cls, value):
        if not 0.0 <= value < 1.0:
            raise ValueError("betas must lie in [0, 1)")
        return value

    @field_validator("max_iterations", "restarts", "stop_window")
    @classmethod
    def _at_least_one(cls, value):
        if value < 1:
            raise ValueError("must be at least 1")
        return value


@dataclass(frozen=True)
class InversionResult:
    """Solution of one (constrained or unconstrained) inversion."""
    z_star: np.ndarray
    x_star: np.ndarray
    final_mse: float
    final_psnr_db: float
    z_norm_sq: float
    log_p_z: float
    iterations_used: int
    converged: bool
    objective_trace: Tuple[float, ...] = field(default=())
    constrained: bool = False

    def to_dict(self, include_trace=False):
        payload = {
            "z_star": self.z_star.tolist(),
            "final_mse": self.final_mse,
            "final_psnr_db": self.final_psnr_db,
            "z_norm_sq": self.z_norm_sq,
            "log_p_z": self.log_p_z,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "constrained": self.constrained,
        }
        if include_trace:
            payload["objective_trace"] = list(self.objective_trace)
        return payload


def _evaluate(spec, z, target, iterations_used, converged, trace, constrained):
    x_star = spec.forward(z)
    final_mse = mse(x_star, target)
    return InversionResult(
        z_star=z,
        x_star=x_star,
        final_mse=final_mse,
        final_psnr_db=psnr_from_mse(final_mse, spec.peak),
        z_norm_sq=float(np.dot(z, z)),
        log_p_z=log_density(spec.noise, z),
        iterations_used=iterations_used,
        converged=converged,
        objective_trace=tuple(trace),
        constrained=constrained,
    )


def _initial_latent(spec, config, seed, z_init):
    if config.init_scheme == "provided":
        if z_init is None:
            raise ConfigError("init_scheme 'provided' needs an initial latent")
        z = np.array(z_init, dtype=np.float64).reshape(-1)
        if z.size != spec.latent_dim:
            raise ShapeMismatchError(f"initial latent has length {z.size}, latent_dim is {spec.latent_dim}")
        return z
    if config.init_scheme == "zeros":
        return np.zeros(spec.latent_dim)
    return sample_noise(spec.noise, seed, 1)[0]


def _window_stalled(psnr_trace, window, tolerance):
    """Mean PSNR of the last window improved on the window before it by less than tolerance."""
    if len(psnr_trace) < 2 * window:
        return False
    recent = np.mean(psnr_trace[-window:])
    previous = np.mean(psnr_trace[-2 * window:-window])
    return recent - previous < tolerance


def invert(spec, target, config, seed, z_init=None):
    """
    Solve min_z MSE(G(z), target), optionally subject to the typical-set constraint.

    Adam runs on the MSE objective; in constrained mode every step is followed
    by a projection (radial rescale for Gaussian noise, box clamp for uniform
    noise). Adam moments are not reset by the projection.

    Args:
        spec (GeneratorSpec): Generator to invert.
        target: Sample with spec.flat_length elements.
        config (InversionConfig): Optimizer settings.
        seed (int): Seed for the initial latent draw.
        z_init: Initial latent when config.init_scheme == "provided".

    Returns:
        InversionResult: Best iterate found.

    Raises:
        DivergenceError: The objective became non-finite.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.size != spec.flat_length:
        raise ShapeMismatchError(f"target has {target.size} elements, generator emits {spec.flat_length}")

    z = _initial_latent(spec, config, seed, z_init)
    if config.constrained:
        z = project_to_typical_set(spec.noise, z, config.delta)

    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_epsilon)
    trace = []
    psnr_trace = []
    best_value, best_z = math.inf, z
    converged = False
    iteration = 0

    for iteration in range(1, config.max_iterations + 1):
        value, grad = spec.objective_and_grad(z, target)
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            raise DivergenceError(iteration, value)
        trace.append(value)
        psnr_trace.append(psnr_from_mse(value, spec.peak))
        if value < best_value:
            best_value, best_z = value, z

        if value == 0.0 or _window_stalled(psnr_trace, config.stop_window, config.stop_tolerance):
            converged = True
            break

        z = optimizer.step(z, grad)
        if config.constrained:
            z = project_to_typical_set(spec.noise, z, config.delta)

    logger.debug(
        f"Inversion stopped after {iteration} iterations "
        f"(converged={converged}, best mse={best_value:.3e}, constrained={config.constrained})"
    )
    return _evaluate(spec, best_z, target, iteration, converged, trace, config.constrained)


def invert_restarts(spec, target, config, seeds: Sequence[int]):
    """
    Run one inversion per seed and evaluate G at the mean of the solutions.

    Returns:
        tuple: (list of InversionResult, InversionResult at the mean latent).
    """
    if len(seeds) < 2:
        raise ValueError(f"restart experiment needs at least 2 seeds, got {len(seeds)}")
    results = [invert(spec, target, config, seed) for seed in seeds]

    mean_latent = np.mean(np.stack([r.z_star for r in results]), axis=0)
    if config.constrained:
        mean_latent = project_to_typical_set(spec.noise, mean_latent, config.delta)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    mean_result = _evaluate(spec, mean_latent, target, 0, True, (), config.constrained)
    return results, mean_result


def best_of(results):
    """Result with the lowest final MSE; the first one wins ties."""
    return min(results, key=lambda r: r.final_mse)


def farthest_pair(results):
    """Indices (i, j), i < j, of the two solutions furthest apart in latent space."""
    if len(results) < 2:
        raise ValueError("need at least two results")
    latents = np.stack([r.z_star for r in results])
    distances = np.linalg.norm(latents[:, None, :] - latents[None, :, :], axis=-1)
    best = (0, 1)
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            if distances[i, j] > distances[best]:
                best = (i, j)
    return best


def interpolate_latents(spec, z_a, z_b, steps, mode="linear"):
    """
    Walk from z_a to z_b and generate a sample at each step.

    Args:
        spec (GeneratorSpec): Generator.
        z_a, z_b: Endpoint latents of equal length.
        steps (int): Number of points including both endpoints (>= 2).
        mode (str): "linear" or "polar" (great-circle direction, linearly
            interpolated norm).

    Returns:
        list: (z_t, x_t) pairs; the first and last reproduce z_a and z_b exactly.
    """
    z_a = np.array(z_a, dtype=np.float64).reshape(-1)
    z_b = np.array(z_b, dtype=np.float64).reshape(-1)
    if z_a.shape != z_b.shape:
        raise ShapeMismatchError(f"endpoints have lengths {z_a.size} and {z_b.size}")
    if steps < 2:
        raise ValueError(f"steps must be at least 2, got {steps}")
    if mode not in ("linear", "polar"):
        raise ValueError(f"unknown interpolation mode {mode!r}")

    ts = np.linspace(0.0, 1.0, steps)
    if mode == "linear":
        latents = [(1.0 - t) * z_a + t * z_b for t in ts]
    else:
        latents = _polar_path(z_a, z_b, ts)
    latents[0], latents[-1] = z_a.copy(), z_b.copy()
    return [(z, spec.forward(z)) for z in latents]


def _polar_path(z_a, z_b, ts):
    norm_a, norm_b = float(np.linalg.norm(z_a)), float(np.linalg.norm(z_b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise InterpolationError("polar interpolation is undefined for a zero endpoint")
    unit_a, unit_b = z_a / norm_a, z_b / norm_b
    cosine = float(np.clip(np.dot(unit_a, unit_b), -1.0, 1.0))
    if cosine <= -1.0 + 1e-12:
        raise InterpolationError("polar interpolation is undefined for antipodal endpoints")

    omega = math.acos(cosine)
    sin_omega = math.sin(omega)
    path = []
    for t in ts:
        if sin_omega < 1e-12:
            direction = unit_a
        else:
            direction = (math.sin((1.0 - t) * omega) * unit_a + math.sin(t * omega) * unit_b) / sin_omega
        path.append(((1.0 - t) * norm_a + t * norm_b) * direction)
    return path


@dataclass(frozen=True)
class TypicalSetReport:
    """Where inversion solutions sit relative to the typical set of p(z)."""
    mean_log_p_z: float
    median_log_p_z: float
    reference_mean_log_p_z: float
    znorm_histogram: list
    reference_histogram: list
    outside_fraction: float
    boundary_fraction: float
    count: int

    def to_dict(self):
        return {
            "mean_log_p_z": self.mean_log_p_z,
            "median_log_p_z": self.median_log_p_z,
            "reference_mean_log_p_z": self.reference_mean_log_p_z,
            "znorm_histogram": [list(row) for row in self.znorm_histogram],
            "reference_histogram": [list(row) for row in self.reference_histogram],
            "outside_fraction": self.outside_fraction,
            "boundary_fraction": self.boundary_fraction,
            "count": self.count,
        }


def typical_set_report(results, dist, reference_draws, seed, delta=0.0, bins=50, reference=None):
    """
    Compare inversion solutions with fresh draws from p(z).

    A precomputed `reference` matrix of prior draws replaces the fresh draws
    when given.

    Returns:
        TypicalSetReport: log p(z*) summary, ||z*||^2 histogram next to the
        prior-draw histogram (shared edges), and the fractions of solutions
        outside the constraint set and on its boundary.
    """
    if not results:
        raise ValueError("typical_set_report needs at least one result")
    latents = np.stack([r.z_star for r in results])
    norms = np.array([r.z_norm_sq for r in results])
    log_ps = np.array([r.log_p_z for r in results])

    if reference is None:
        reference = sample_noise(dist, seed, reference_draws)
    reference_norms = np.einsum("ij,ij->i", reference, reference)
    reference_log_ps = np.asarray(log_density(dist, reference))

    edges = shared_edges(norms, reference_norms, bins=bins)

    if dist.is_gaussian:
        radius_sq = typical_radius_sq(dist, delta)
        outside = norms > radius_sq + 1e-9 * max(1.0, radius_sq)
        boundary = np.abs(norms - radius_sq) <= 1e-6 * max(1.0, radius_sq)
    else:
        outside = np.array([not in_typical_set(dist, z) for z in latents])
        boundary = np.any((latents == dist.low) | (latents == dist.high), axis=1)

    return TypicalSetReport(
        mean_log_p_z=float(np.mean(log_ps)),
        median_log_p_z=float(np.median(log_ps)),
        reference_mean_log_p_z=float(np.mean(reference_log_ps)),
        znorm_histogram=emit_histogram(norms, bin_edges=edges),
        reference_histogram=emit_histogram(reference_norms, bin_edges=edges),
        outside_fraction=float(np.mean(outside)),
        boundary_fraction=float(np.mean(boundary)),
        count=len(results),
    )
