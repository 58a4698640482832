"""Discrete and continuous noise schedules for deterministic diffusion sampling.

The central object is the cumulative signal ladder ``alpha_bar``: ``T + 1``
values in (0, 1], strictly decreasing, with ``alpha_bar[0]`` close to one
(nearly clean data) and ``alpha_bar[T]`` close to zero (nearly pure noise).
The default ladder is the cumulative product of a linear variance ramp over
``base_steps`` fine-grained steps, subsampled uniformly to the working step
count while keeping both endpoint values.

All per-step sampler coefficients derive from consecutive ladder values:

    eta_t    = sqrt(alpha_bar[t-1] / alpha_bar[t])
    lambda_t = eta_t * (1 - alpha_bar[t])
               - sqrt((1 - alpha_bar[t-1]) * (1 - alpha_bar[t]))
    sigma(t) = sqrt((1 - alpha_bar(t)) / alpha_bar(t))

``x_{t-1} = eta_t x_t + lambda_t * score`` is algebraically the deterministic
sampler update with the noise predictor replaced by
``-sqrt(1 - alpha_bar_t) * score``; the test suite cross-checks both forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InputError

__all__ = [
    "BetaSpec",
    "NoiseSchedule",
    "ddim_coeffs_from_pair",
    "ladder_violations",
]

# Endpoint policy for a usable ladder: nearly clean at t=0, nearly pure
# noise at t=T.
_ALPHA_BAR_FIRST_MIN = 0.999
_ALPHA_BAR_LAST_MAX = 0.01


@dataclass(frozen=True)
class BetaSpec:
    """Generating variance ramp: linear from ``start`` to ``end`` over ``base_steps``."""

    start: float
    end: float
    base_steps: int


def ddim_coeffs_from_pair(abar_prev: float, abar_cur: float) -> tuple[float, float]:
    """Per-step coefficients (eta, lambda) from consecutive ladder values.

    Works for any pair with ``0 < abar_cur <= abar_prev <= 1``; exposed
    separately from :class:`NoiseSchedule` so degenerate or toy pairs can be
    probed without building a full ladder.
    """
    if not (0.0 < abar_cur <= abar_prev <= 1.0):
        raise InputError(
            f"need 0 < abar_cur <= abar_prev <= 1, got ({abar_prev}, {abar_cur})"
        )
    eta = np.sqrt(abar_prev / abar_cur)
    lam = eta * (1.0 - abar_cur) - np.sqrt((1.0 - abar_prev) * (1.0 - abar_cur))
    return float(eta), float(lam)


def ladder_violations(alpha_bar: np.ndarray) -> list[str]:
    """Structural problems of an alpha_bar ladder, empty list if sound."""
    ab = np.asarray(alpha_bar, dtype=float)
    problems = []
    if ab.ndim != 1 or ab.size < 2:
        return ["alpha_bar must be a 1-d sequence with at least two entries"]
    if not np.all(np.isfinite(ab)):
        problems.append("alpha_bar contains non-finite values")
        return problems
    if np.any(ab <= 0.0) or np.any(ab > 1.0):
        problems.append("alpha_bar values must lie in (0, 1]")
    if np.any(np.diff(ab) >= 0.0):
        problems.append("alpha_bar must be strictly decreasing")
    if ab[0] < _ALPHA_BAR_FIRST_MIN:
        problems.append(f"alpha_bar[0] = {ab[0]:.6g} < {_ALPHA_BAR_FIRST_MIN}")
    if ab[-1] > _ALPHA_BAR_LAST_MAX:
        problems.append(f"alpha_bar[T] = {ab[-1]:.6g} > {_ALPHA_BAR_LAST_MAX}")
    return problems


class NoiseSchedule:
    """Cumulative signal ladder plus its continuous interpolant.

    Immutable after construction; safe to share read-only across workers.

    Attributes:
        alpha_bar: ladder values, shape (T + 1,), indexed by timestep.
        beta_spec: the generating variance ramp, or None for explicit ladders.
        base_alpha_bar: the fine-grained ladder the working one was subsampled
            from (equal to ``alpha_bar`` for explicit ladders).
    """

    def __init__(
        self,
        alpha_bar: np.ndarray,
        beta_spec: BetaSpec | None = None,
        base_alpha_bar: np.ndarray | None = None,
    ):
        ab = np.asarray(alpha_bar, dtype=float).copy()
        problems = ladder_violations(ab)
        if problems:
            raise InputError("invalid alpha_bar ladder: " + "; ".join(problems))
        ab.flags.writeable = False
        self.alpha_bar = ab
        self.beta_spec = beta_spec
        self.base_alpha_bar = ab if base_alpha_bar is None else np.asarray(base_alpha_bar, float)
        # Monotone interpolation of log(alpha_bar) keeps the continuous ladder
        # strictly decreasing and exact at integer knots.
        self._log_interp = PchipInterpolator(np.arange(ab.size), np.log(ab))

    @classmethod
    def linear(
        cls,
        beta_start: float = 1e-4,
        beta_end: float = 2e-2,
        base_steps: int = 1000,
        ddim_steps: int = 50,
    ) -> "NoiseSchedule":
        """Linear variance ramp, subsampled uniformly to ``ddim_steps`` steps.

        The fine ladder is ``cumprod(1 - beta_i)`` with ``beta`` linear from
        ``beta_start`` to ``beta_end``; subsampling keeps index 0 and the last
        index, so both endpoint values survive.
        """
        if base_steps < 2:
            raise InputError("base_steps must be at least 2")
        if not (0.0 < beta_start <= beta_end < 1.0):
            raise InputError("need 0 < beta_start <= beta_end < 1")
        if not (1 <= ddim_steps <= base_steps - 1):
            raise InputError("ddim_steps must be in [1, base_steps - 1]")
        betas = np.linspace(beta_start, beta_end, base_steps)
        base = np.cumprod(1.0 - betas)
        idx = np.round(np.linspace(0, base_steps - 1, ddim_steps + 1)).astype(int)
        return cls(
            base[idx],
            beta_spec=BetaSpec(beta_start, beta_end, base_steps),
            base_alpha_bar=base,
        )

    @classmethod
    def explicit(cls, alpha_bar) -> "NoiseSchedule":
        """Schedule from an explicitly supplied ladder."""
        return cls(np.asarray(alpha_bar, dtype=float))

    @classmethod
    def _unchecked(cls, alpha_bar) -> "NoiseSchedule":
        # Test hook: bypasses validation so fault-injection checks can feed
        # broken ladders to the verification suite.
        obj = cls.__new__(cls)
        obj.alpha_bar = np.asarray(alpha_bar, dtype=float)
        obj.beta_spec = None
        obj.base_alpha_bar = obj.alpha_bar
        obj._log_interp = None
        return obj

    @property
    def T(self) -> int:
        """Number of sampling steps (states are indexed 0..T)."""
        return self.alpha_bar.size - 1

    def _check_time(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.T):
            raise InputError(f"time {t} outside [0, {self.T}]")
        return t

    def alpha_bar_at(self, t):
        """Continuous-time ladder value; exact at integer ``t``."""
        t = self._check_time(t)
        out = np.exp(self._log_interp(t))
        # Pin integer queries to the stored ladder so round trips are exact.
        ti = np.round(t).astype(int)
        exact = np.abs(t - ti) == 0.0
        out = np.where(exact, self.alpha_bar[ti], out)
        return float(out) if out.ndim == 0 else out

    def sigma_of(self, t):
        """Noise-to-signal coordinate sigma(t) = sqrt((1 - abar(t)) / abar(t))."""
        ab = self.alpha_bar_at(t)
        return np.sqrt((1.0 - ab) / ab)

    def _check_step(self, t: int) -> int:
        t = int(t)
        if not (1 <= t <= self.T):
            raise InputError(f"step index {t} outside [1, {self.T}]")
        return t

    def ddim_coeffs(self, t: int) -> tuple[float, float]:
        """(eta_t, lambda_t) for the step from state t to state t-1."""
        t = self._check_step(t)
        return ddim_coeffs_from_pair(self.alpha_bar[t - 1], self.alpha_bar[t])

    def eps_coeff(self, t: int) -> float:
        """Net coefficient of the noise prediction in the raw one-step update.

        f(t) = -sqrt(abar[t-1] (1 - abar[t]) / abar[t]) + sqrt(1 - abar[t-1]);
        small near t = 1 on fine ladders, which is what keeps early steps
        nearly insensitive to score perturbations.
        """
        t = self._check_step(t)
        ab_prev, ab_cur = self.alpha_bar[t - 1], self.alpha_bar[t]
        return float(
            -np.sqrt(ab_prev * (1.0 - ab_cur) / ab_cur) + np.sqrt(1.0 - ab_prev)
        )

    def single_gaussian_step_factor(self, t: int) -> float:
        """Contraction factor eta_t - lambda_t of a unit-variance linear score."""
        eta, lam = self.ddim_coeffs(t)
        return eta - lam

    def single_gaussian_chain_factor(self, t_start: int | None = None) -> float:
        """Product of step factors from ``t_start`` (default T) down to 1."""
        t_start = self.T if t_start is None else self._check_step(t_start)
        return float(
            np.prod([self.single_gaussian_step_factor(t) for t in range(1, t_start + 1)])
        )

    def base_resolution(self) -> "NoiseSchedule":
        """The same ladder at full generating resolution (no subsampling)."""
        return NoiseSchedule(self.base_alpha_bar, beta_spec=self.beta_spec,
                             base_alpha_bar=self.base_alpha_bar)

    def to_config(self) -> dict:
        """Config-file representation (see :mod:`ccslab.config`)."""
        if self.beta_spec is not None:
            return {
                "kind": "linear",
                "beta_start": self.beta_spec.start,
                "beta_end": self.beta_spec.end,
                "base_steps": self.beta_spec.base_steps,
                "ddim_steps": self.T,
            }
        return {"kind": "explicit", "alpha_bar": self.alpha_bar.tolist()}

    def __repr__(self) -> str:
        return (
            f"NoiseSchedule(T={self.T}, alpha_bar[0]={self.alpha_bar[0]:.6g}, "
            f"alpha_bar[T]={self.alpha_bar[-1]:.6g})"
        )
