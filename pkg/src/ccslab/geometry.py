"""Hypersphere geometry of start-state noise.

High-dimensional standard Gaussians concentrate on the sphere of radius
sqrt(d); the perturbation machinery in :mod:`ccslab.control` relies on that in
two ways.  Spherical interpolation moves along the sphere (norm-preserving
for equal-norm inputs), so perturbed chain starts keep the radius the
deterministic sampler was fed during inversion.  And for equal norms the
interpolation is a plain rotation by the arc length, so the displacement it
induces is pinned by the closed form

    ||slerp(x, eps, c0) - x|| = 2 ||x|| sin(c0 / 2),

which inverts to an explicit arc length for any reachable target distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DegenerateGeometryError, InputError
from .rng import rng_for

__all__ = [
    "SlerpInputs",
    "angle_between",
    "slerp",
    "c0_for_distance",
    "concentration_bound",
    "norm_drift_stats",
    "gaussian_norm_frequency",
    "NormDriftStats",
]

_SIN_THETA_MIN = 1e-8


def angle_between(a, b) -> float:
    """Angle in [0, pi] between two nonzero vectors (cosine clamped)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise InputError("angle expects two vectors of equal length")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise InputError("angle undefined for zero vectors")
    cosine = float(np.dot(a, b) / (na * nb))
    return float(np.arccos(np.clip(cosine, -1.0, 1.0)))


@dataclass(frozen=True)
class SlerpInputs:
    """Validated inputs of a spherical interpolation.

    ``theta`` is derived from anchor and noise.  Interpolation is on-arc by
    default (``c0`` beyond theta is rejected); with ``extrapolate=True`` the
    same great-circle formula is evaluated for any ``c0`` in [0, pi), which
    large requested displacements need because theta concentrates at pi/2.
    Nearly collinear pairs are always refused (the formula divides by
    sin(theta)).
    """

    anchor: np.ndarray
    noise: np.ndarray
    c0: float
    extrapolate: bool = False
    theta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        object.__setattr__(self, "noise", np.asarray(self.noise, dtype=float))
        theta = angle_between(self.anchor, self.noise)
        object.__setattr__(self, "theta", theta)
        if np.sin(theta) <= _SIN_THETA_MIN:
            raise DegenerateGeometryError(
                f"anchor and noise are numerically collinear (sin theta = {np.sin(theta):.3g})"
            )
        if self.extrapolate:
            ok = 0.0 <= self.c0 < np.pi
            limit = f"pi = {np.pi:.6g})"
        else:
            ok = 0.0 <= self.c0 <= theta
            limit = f"theta = {theta:.6g}]"
        if not ok:
            raise InputError(f"arc length c0 = {self.c0:.6g} outside [0, {limit}")


def slerp(anchor, noise, c0: float, extrapolate: bool = False) -> np.ndarray:
    """Spherical interpolation by arc length ``c0`` from anchor toward noise.

        sin(c0) / sin(theta) * noise + sin(theta - c0) / sin(theta) * anchor

    c0 = 0 returns the anchor, c0 = theta the noise; for equal-norm inputs
    the result keeps that norm (also past theta when extrapolating).
    """
    inp = SlerpInputs(anchor, noise, float(c0), extrapolate)
    st = np.sin(inp.theta)
    return (np.sin(inp.c0) / st) * inp.noise + (np.sin(inp.theta - inp.c0) / st) * inp.anchor


def c0_for_distance(anchor_norm_sq: float, target_distance: float, margin: float = 0.05) -> float:
    """Arc length that realizes a requested perturbation distance.

    Solves ``2 ||x|| sin(c0/2) = M`` as ``c0 = arccos(1 - M^2 / (2 ||x||^2))``.
    Distances beyond ``(2 - margin) ||x||`` are geometrically unreachable on
    the sphere and rejected.
    """
    anchor_norm_sq = float(anchor_norm_sq)
    target_distance = float(target_distance)
    if anchor_norm_sq <= 0.0:
        raise InputError("anchor norm must be positive")
    if not (0.0 < margin < 1.0):
        raise InputError("margin must be in (0, 1)")
    cap = (2.0 - margin) * np.sqrt(anchor_norm_sq)
    if not (0.0 <= target_distance <= cap):
        raise InputError(
            f"target distance {target_distance:.6g} outside [0, {cap:.6g}]"
        )
    return float(np.arccos(1.0 - target_distance**2 / (2.0 * anchor_norm_sq)))


def concentration_bound(d: int, delta: float) -> float:
    """Lower bound on P[ ||X||^2 in (1 +- delta) d ] for X ~ N(0, I_d).

        1 - 2 exp(-d (delta^2 / 2 - delta^3 / 3) / 2)

    clamped to 0 where the expression goes vacuous.
    """
    d = int(d)
    delta = float(delta)
    if d < 1:
        raise InputError("d must be >= 1")
    if not (0.0 < delta < 1.0):
        raise InputError("delta must be in (0, 1)")
    bound = 1.0 - 2.0 * np.exp(-0.5 * d * (0.5 * delta**2 - delta**3 / 3.0))
    return float(max(bound, 0.0))


class NormDriftStats(NamedTuple):
    estimate: float  # Monte-Carlo mean of ||x + dx||^2
    predicted: float  # ||x||^2 + tr(Cov[dx])
    stderr: float
    n: int


_BLOCK = 1024  # draws per counter-seeded block


def norm_drift_stats(
    x,
    delta_sampler: Callable[[np.random.Generator, int], np.ndarray],
    n: int,
    seed: int,
    trace_cov: float,
) -> NormDriftStats:
    """Monte-Carlo check of E||x + dx||^2 against ||x||^2 + tr(Cov[dx]).

    ``delta_sampler(rng, m)`` must return m zero-mean perturbations, one per
    row.  Draw blocks are counter-seeded, so the estimate does not depend on
    how blocks are scheduled.
    """
    x = np.asarray(x, dtype=float)
    n = int(n)
    if n < 2:
        raise InputError("need at least 2 draws")
    norms_sq = np.empty(n)
    for block, start in enumerate(range(0, n, _BLOCK)):
        m = min(_BLOCK, n - start)
        dx = np.asarray(delta_sampler(rng_for(seed, block), m), dtype=float)
        if dx.shape != (m, x.size):
            raise InputError("delta_sampler returned wrong shape")
        norms_sq[start : start + m] = np.sum((x + dx) ** 2, axis=1)
    estimate = float(norms_sq.mean())
    stderr = float(norms_sq.std(ddof=1) / np.sqrt(n))
    predicted = float(np.dot(x, x) + trace_cov)
    return NormDriftStats(estimate, predicted, stderr, n)


def gaussian_norm_frequency(d: int, delta: float, n_draws: int, seed: int) -> float:
    """Fraction of N(0, I_d) draws with ||X||^2 inside (1 +- delta) d."""
    d = int(d)
    n_draws = int(n_draws)
    if n_draws < 1:
        raise InputError("need at least one draw")
    lo, hi = (1.0 - delta) * d, (1.0 + delta) * d
    hits = 0
    for block, start in enumerate(range(0, n_draws, _BLOCK)):
        m = min(_BLOCK, n_draws - start)
        z = rng_for(seed, block).standard_normal((m, d))
        nsq = np.einsum("ij,ij->i", z, z)
        hits += int(np.count_nonzero((nsq >= lo) & (nsq <= hi)))
    return hits / n_draws
