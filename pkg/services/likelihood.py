"""
services/likelihood.py - Unnormalized marginal likelihood of a reconstruction

Monte Carlo estimators in latent space:

- direct: fraction of prior draws whose sample lands within the threshold.
- isotropic: largest perturbation scale whose mean distortion stays under
  the threshold.
- counting: hit fraction for Gaussian perturbations of a fixed scale.
- combined: counting at the largest scale on a geometric grid that still
  keeps enough hits.

All logs are natural and omit the partition constant -ln Z, so only
differences between estimates of the same estimator are meaningful.
Perturbation directions are common random numbers: block j of directions
comes from the stream (seed, j) whatever the scale, so hit counts at
different scales are paired.
"""
from dataclasses import dataclass
import logging
import math
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from services.errors import ScheduleError, ShapeMismatchError
from services.generator_model import draw_noise, log_density
from utils.metrics import batch_mse, psnr_from_mse, threshold_from_psnr
from utils.rng_utils import make_rng

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 2048
LN10 = math.log(10.0)


def geometric_grid(sigma_min, sigma_max, ratio):
    """sigma_min * ratio**k for every k keeping the value at or below sigma_max."""
    if not (sigma_min > 0 and sigma_max >= sigma_min and ratio > 1):
        raise ValueError(f"invalid grid bounds ({sigma_min}, {sigma_max}, ratio {ratio})")
    count = int(math.floor(math.log(sigma_max / sigma_min) / math.log(ratio) + 1e-9)) + 1
    return tuple(sigma_min * ratio ** k for k in range(count))


class LikelihoodConfig(BaseModel):
    """Settings of the combined estimator's sigma schedule."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    psnr_threshold_db: float = 40.0
    n_max: int = 10000
    n_min_hits: int = 100
    sigma_min: float = 1e-4
    sigma_max: float = 1.0
    sigma_ratio: float = 1.25
    sigma_grid: Optional[Tuple[float, ...]] = None
    seed: int = 0
    chunk_size: int = DEFAULT_CHUNK

    @field_validator("n_max", "chunk_size")
    @classmethod
    def _positive(cls, value):
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @model_validator(mode="after")
    def _check_schedule(self):
        if not 1 <= self.n_min_hits < self.n_max:
            raise ValueError(f"need 1 <= n_min_hits < n_max, got {self.n_min_hits} and {self.n_max}")
        grid = self.grid()
        if any(s <= 0 for s in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sigma_grid must be strictly increasing and positive")
        return self

    def grid(self):
        if self.sigma_grid is not None:
            if not self.sigma_grid:
                raise ValueError("sigma_grid must not be empty")
            return tuple(float(s) for s in self.sigma_grid)
        return geometric_grid(self.sigma_min, self.sigma_max, self.sigma_ratio)

    def threshold_for(self, spec):
        return threshold_from_psnr(self.psnr_threshold_db, spec.peak)


def unnormalized_log_likelihood(hits, n, sigma, dim):
    """ln(hits/n) + dim * ln(sigma); -inf when nothing was hit."""
    if hits == 0:
        return -math.inf
    return math.log(hits / n) + dim * math.log(sigma)


@dataclass(frozen=True)
class LikelihoodEstimate:
    """
    An unnormalized log marginal likelihood and the evidence behind it.

    log_unnormalized == unnormalized_log_likelihood(hits, n_used, sigma_used, dim)
    for every estimator: direct estimates use sigma_used = 1, isotropic
    estimates use hits = n_used.
    """
    log_unnormalized: float
    sigma_used: float
    n_used: int
    hits: int
    estimator: Literal["direct", "isotropic", "counting", "combined"]
    saturated: bool
    dim: int
    mean_mse: Optional[float] = None

    @property
    def log10_unnormalized(self):
        return self.log_unnormalized / LN10

    def to_dict(self):
        return {
            "estimator": self.estimator,
            "log_unnormalized": self.log_unnormalized,
            "log10_unnormalized": self.log10_unnormalized,
            "sigma_used": self.sigma_used,
            "n_used": self.n_used,
            "hits": self.hits,
            "saturated": self.saturated,
            "mean_mse": self.mean_mse,
        }


def _estimate(hits, n, sigma, dim, estimator, saturated, mean_mse=None):
    return LikelihoodEstimate(
        log_unnormalized=unnormalized_log_likelihood(hits, n, sigma, dim),
        sigma_used=float(sigma),
        n_used=int(n),
        hits=int(hits),
        estimator=estimator,
        saturated=bool(saturated),
        dim=int(dim),
        mean_mse=mean_mse,
    )


def _check_center(spec, z_center, dist):
    z_center = np.asarray(z_center, dtype=np.float64).reshape(-1)
    if z_center.size != dist.dim or dist.dim != spec.latent_dim:
        raise ShapeMismatchError(
            f"z_center has length {z_center.size}, noise dim {dist.dim}, latent_dim {spec.latent_dim}"
        )
    return z_center


def _direction_blocks(seed, dim, n, chunk):
    """Yield standard-normal direction blocks covering the first n draws of the stream."""
    drawn, block = 0, 0
    while drawn < n:
        size = min(chunk, n - drawn)
        directions = make_rng(seed, block).standard_normal((chunk, dim))
        yield directions[:size]
        drawn += size
        block += 1


def _directions(seed, dim, n, chunk):
    return np.concatenate(list(_direction_blocks(seed, dim, n, chunk)), axis=0)


def _count_hits(spec, z_center, x_center, sigma, n, seed, ceiling, chunk, floor=None):
    """
    Count perturbations z_center + sigma*eps landing strictly within the MSE ceiling.

    With floor set, stops as soon as hits >= floor or hits < floor is certain.

    Returns:
        tuple: (hits, draws examined).
    """
    hits, drawn = 0, 0
    for directions in _direction_blocks(seed, spec.latent_dim, n, chunk):
        outputs = spec.forward(z_center + sigma * directions)
        hits += int(np.count_nonzero(batch_mse(outputs, x_center) < ceiling))
        drawn += directions.shape[0]
        if floor is not None and (hits >= floor or hits + (n - drawn) < floor):
            break
    return hits, drawn


def estimate_direct(spec, x_ref, dist, threshold, N, seed, chunk_size=DEFAULT_CHUNK):
    """
    Fraction of fresh prior draws whose generated sample is within threshold of x_ref.

    Args:
        spec (GeneratorSpec): Generator.
        x_ref: Reference sample (usually the reconstruction).
        dist (NoiseDistribution): Prior p(z).
        threshold (DistanceThreshold): Hit threshold.
        N (int): Number of prior draws.
        seed (int): Stream seed.

    Returns:
        LikelihoodEstimate: log = ln(hits/N); -inf when nothing was hit.
    """
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    x_ref = np.asarray(x_ref, dtype=np.float64).reshape(-1)
    if x_ref.size != spec.flat_length:
        raise ShapeMismatchError(f"x_ref has {x_ref.size} elements, generator emits {spec.flat_length}")

    hits, drawn, block = 0, 0, 0
    while drawn < N:
        size = min(chunk_size, N - drawn)
        latents = draw_noise(dist, make_rng(seed, block), chunk_size)[:size]
        hits += int(np.count_nonzero(batch_mse(spec.forward(latents), x_ref) < threshold.mse_ceiling))
        drawn += size
        block += 1
    logger.debug(f"Direct estimate: {hits}/{N} prior draws within {threshold.psnr_floor_db} dB")
    return _estimate(hits, N, 1.0, dist.dim, "direct", False)


def estimate_counting(spec, z_center, dist, threshold, sigma_eps, N, seed, chunk_size=DEFAULT_CHUNK):
    """
    Count Gaussian perturbations of scale sigma_eps around z_center whose
    sample stays within threshold of G(z_center).

    Returns:
        LikelihoodEstimate: log = ln(hits/N) + dim * ln(sigma_eps).
    """
    if not sigma_eps > 0:
        raise ValueError(f"sigma_eps must be positive, got {sigma_eps}")
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    z_center = _check_center(spec, z_center, dist)
    x_center = spec.forward(z_center)
    hits, _ = _count_hits(spec, z_center, x_center, sigma_eps, N, seed, threshold.mse_ceiling, chunk_size)
    return _estimate(hits, N, sigma_eps, dist.dim, "counting", False)


def _mean_mse(spec, z_center, x_center, sigma, directions):
    return float(np.mean(batch_mse(spec.forward(z_center + sigma * directions), x_center)))


def estimate_isotropic(spec, z_center, dist, threshold, N, seed, sigma_min=1e-4, sigma_max=1.0,
                       chunk_size=DEFAULT_CHUNK):
    """
    Largest perturbation scale whose mean distortion stays within the threshold.

    Bisects log(sigma) between sigma_min and sigma_max to 1% relative
    precision, using the same N directions at every trial scale, and keeps
    the lower bracket (the mean MSE there is at most the ceiling).

    Returns:
        LikelihoodEstimate: log = dim * ln(sigma_bar); saturated when the
        search ends on a bracket endpoint.
    """
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    z_center = _check_center(spec, z_center, dist)
    x_center = spec.forward(z_center)
    directions = _directions(seed, dist.dim, N, chunk_size)
    ceiling = threshold.mse_ceiling

    top = _mean_mse(spec, z_center, x_center, sigma_max, directions)
    if top <= ceiling:
        return _estimate(N, N, sigma_max, dist.dim, "isotropic", True, top)
    bottom = _mean_mse(spec, z_center, x_center, sigma_min, directions)
    if bottom > ceiling:
        logger.debug(f"Isotropic search: mean MSE {bottom:.3e} exceeds the ceiling already at {sigma_min}")
        return _estimate(N, N, sigma_min, dist.dim, "isotropic", True, bottom)

    lo, hi, lo_mse = sigma_min, sigma_max, bottom
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        value = _mean_mse(spec, z_center, x_center, mid, directions)
        if value <= ceiling:
            lo, lo_mse = mid, value
        else:
            hi = mid
    return _estimate(N, N, lo, dist.dim, "isotropic", False, lo_mse)


def estimate_combined(spec, z_center, dist, config, seed=None):
    """
    Combined estimator with the adaptive sigma schedule.

    Walks the sigma grid upward. Each level draws up to n_max perturbations
    and stops early once passing (hits >= n_min_hits) or failing is certain.
    The walk ends at the first failing level; the level below it is then
    counted with the full n_max draws and reported.

    Args:
        spec (GeneratorSpec): Generator.
        z_center: Latent of the reconstruction.
        dist (NoiseDistribution): Prior p(z).
        config (LikelihoodConfig): Schedule settings.
        seed (int): Overrides config.seed.

    Returns:
        LikelihoodEstimate: saturated when the grid top still passes.

    Raises:
        ScheduleError: The smallest grid sigma already fails the hit floor.
    """
    seed = config.seed if seed is None else seed
    z_center = _check_center(spec, z_center, dist)
    x_center = spec.forward(z_center)
    ceiling = config.threshold_for(spec).mse_ceiling
    grid = config.grid()

    selected = None
    for index, sigma in enumerate(grid):
        hits, drawn = _count_hits(
            spec, z_center, x_center, sigma, config.n_max, seed, ceiling, config.chunk_size, floor=config.n_min_hits
        )
        passed = hits >= config.n_min_hits
        logger.debug(f"sigma level {index} ({sigma:.4g}): {hits} hits in {drawn} draws, passed={passed}")
        if not passed:
            break
        selected = index

    if selected is None:
        raise ScheduleError(
            f"smallest grid sigma {grid[0]:.3g} yields fewer than {config.n_min_hits} hits; "
            f"start the sigma grid lower"
        )

    sigma = grid[selected]
    hits, _ = _count_hits(spec, z_center, x_center, sigma, config.n_max, seed, ceiling, config.chunk_size)
    saturated = selected == len(grid) - 1
    return _estimate(hits, config.n_max, sigma, dist.dim, "combined", saturated)


def sigma_sweep(spec, z_center, dist, sigma_grid, N, seed, chunk_size=DEFAULT_CHUNK):
    """
    Mean distortion of perturbed reconstructions as a function of sigma.

    Returns:
        list: (sigma, PSNR of the mean MSE) pairs, one per grid value.
    """
    if len(sigma_grid) == 0:
        raise ValueError("sigma grid must not be empty")
    z_center = _check_center(spec, z_center, dist)
    x_center = spec.forward(z_center)
    directions = _directions(seed, dist.dim, N, chunk_size)
    return [
        (float(sigma), psnr_from_mse(_mean_mse(spec, z_center, x_center, sigma, directions), spec.peak))
        for sigma in sigma_grid
    ]


def prior_scale_log(estimate, dist, z_center):
    """
    Put a perturbation-based estimate on the scale of the direct estimator.

    The isotropic, counting and combined estimators measure mass under a
    unit Gaussian around z_center; adding ln p(z_center) + (dim/2) ln(2 pi)
    turns that into prior mass, comparable with estimate_direct.
    """
    if estimate.estimator == "direct":
        return estimate.log_unnormalized
    z_center = np.asarray(z_center, dtype=np.float64).reshape(-1)
    return estimate.log_unnormalized + log_density(dist, z_center) + 0.5 * dist.dim * math.log(2.0 * math.pi)
