"""Residual and fit metrics.

The working diversity metric is the per-coordinate root-mean-square residual
``||sample - reference||_2 / sqrt(d)``, which makes targets comparable across
dimensions (a unit-range image target of 0.12 means the same thing on a d=64
testbed).
"""

from __future__ import annotations

import numpy as np

from .control import SampleBatch
from .errors import InputError

__all__ = ["rmse", "psnr_of_mean", "sample_sd", "linear_fit", "r_squared"]


def rmse(sample, reference) -> float:
    """Per-coordinate RMS residual between two states."""
    sample = np.asarray(sample, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if sample.shape != reference.shape:
        raise InputError(
            f"length mismatch: {sample.shape} vs {reference.shape}"
        )
    return float(np.linalg.norm(sample - reference) / np.sqrt(sample.size))


def psnr_of_mean(batch: SampleBatch, target, data_range: float = 2.0) -> float:
    """Peak signal-to-noise ratio of the batch mean against the target, in dB.

    ``20 log10(data_range / rmse(mean, target))``; an exact match returns
    +inf.  The default range of 2 matches data modeled in [-1, 1].
    """
    if batch.n < 1:
        raise InputError("batch is empty")
    if data_range <= 0.0:
        raise InputError("data_range must be positive")
    err = rmse(batch.sample_mean(), target)
    if err == 0.0:
        return float("inf")
    return float(20.0 * np.log10(data_range / err))


def sample_sd(batch: SampleBatch) -> float:
    """Mean over draws of each draw's coordinate-wise standard deviation.

    Population convention (divide by the coordinate count), so repeated runs
    are directly comparable.
    """
    if batch.n < 1:
        raise InputError("batch is empty")
    return float(np.mean(np.std(batch.samples, axis=1)))


def linear_fit(x, y) -> tuple[float, float]:
    """Least-squares (slope, bias) of y on x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InputError("need two 1-d arrays of equal length >= 2")
    if np.ptp(x) == 0.0:
        raise InputError("degenerate fit: all abscissae are equal")
    slope, bias = np.polyfit(x, y, 1)
    return float(slope), float(bias)


def r_squared(x, y) -> float:
    """Coefficient of determination of the least-squares line of y on x.

    With an intercept in the fit this lies in [0, 1] and equals 1 exactly for
    collinear points.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, bias = linear_fit(x, y)
    residuals = y - (slope * x + bias)
    ss_res = float(np.dot(residuals, residuals))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0  # constant y is fit exactly by the constant line
    return float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))
