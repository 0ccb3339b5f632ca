"""
Distortion metrics: MSE, PSNR and the PSNR-floor / MSE-ceiling threshold.
"""
from dataclasses import dataclass
import math

import numpy as np

from services.errors import ShapeMismatchError

# Zero-MSE PSNR is reported as this value instead of +inf.
PSNR_CAP_DB = 300.0


@dataclass(frozen=True)
class DistanceThreshold:
    """Threshold T as a PSNR floor and the equivalent MSE ceiling."""
    psnr_floor_db: float
    mse_ceiling: float
    peak: float


def mse(x, y):
    """
    Mean squared error ||x - y||^2 / numel.

    For H x W x 3 images numel is 3K, K the pixel count.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"mse of tensors with shapes {x.shape} and {y.shape}")
    diff = (x - y).reshape(-1)
    return float(np.dot(diff, diff) / diff.size)


def psnr_from_mse(value, peak):
    """10 log10(M^2 / MSE), capped at PSNR_CAP_DB."""
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    if value <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / value))


def psnr(x, y, peak):
    return psnr_from_mse(mse(x, y), peak)


def threshold_from_psnr(psnr_floor_db, peak):
    """
    Convert a PSNR floor (dB) into the matching MSE ceiling M^2 10^(-floor/10).

    Args:
        psnr_floor_db (float): Minimum acceptable PSNR.
        peak (float): Peak value M of the sample space.

    Returns:
        DistanceThreshold: Both forms of the threshold.
    """
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    ceiling = peak * peak * 10.0 ** (-psnr_floor_db / 10.0)
    return DistanceThreshold(psnr_floor_db=float(psnr_floor_db), mse_ceiling=ceiling, peak=float(peak))


def batch_mse(outputs, reference):
    """Row-wise MSE between a batch of outputs and one reference sample."""
    diff = np.asarray(outputs, dtype=np.float64) - np.asarray(reference, dtype=np.float64).reshape(1, -1)
    return np.einsum("ij,ij->i", diff, diff) / diff.shape[1]
