"""Perturbed-sampling mechanisms and the diversity controller.

Every mechanism turns a target mean into a batch of samples whose spread
around the target is governed by one scalar:

* ``ccs_full``    - invert the target to the top timestep, spherically
  interpolate the inverted state toward fresh Gaussian noise by arc length
  ``c0``, and run the chain back down.
* ``ccs_partial`` - invert only to an intermediate timestep ``t0``, extract
  the noise component there, interpolate that toward fresh noise of matching
  scale, reassemble the state, and sample from ``t0``.  Inversion and
  sampling may use different guidance (that variant is the editing
  mechanism).
* ``gp``          - add ``s * eps`` to the inverted state (off-sphere).
* ``ccdf``        - forward-noise the target itself to ``t0`` and sample.

The controller bisects the mechanism's scale until a batch's measured
diversity hits a requested level: starting from the full bracket it samples a
fresh counter-seeded batch at the midpoint each iteration, moves the bracket
toward/away from noise depending on the measurement, and stops inside the
tolerance.  Ordinary diversity is the per-coordinate root-mean-square
residual so targets are comparable across dimensions; a raw-norm mode exists
behind ``metric="l2"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError, NumericsError
from .geometry import slerp
from .rng import child_seed, rng_for
from .sampler import ddim_invert, ddim_sample_batch
from .schedule import NoiseSchedule
from .scoremodel import CfgSpec, GaussianMixtureModel

__all__ = [
    "SampleBatch",
    "PerturbationSpec",
    "ControllerConfig",
    "ControllerStep",
    "ControllerTrace",
    "ccs_full_sample",
    "ccs_partial_sample",
    "ccs_edit_sample",
    "gp_sample",
    "ccdf_sample",
    "run_mechanism",
    "mechanism_handle",
    "controller_tune",
    "default_gp_scale_max",
]

MECHANISMS = ("ccs_full", "ccs_partial", "gp", "ccdf")

_SLERP_RETRIES = 3


@dataclass(frozen=True)
class SampleBatch:
    """Generated states plus the provenance needed to reproduce them.

    ``start_norms`` holds the norm of each perturbed chain start and
    ``anchor_norm`` the norm of the unperturbed one, so norm-drift
    diagnostics never require rerunning the mechanism.
    """

    mechanism: str
    target: np.ndarray  # (d,)
    scale: float
    seed: int
    samples: np.ndarray  # (n, d)
    draw_seeds: np.ndarray  # (n,) child seed per draw
    start_norms: np.ndarray  # (n,)
    anchor_norm: float
    t0: int | None = None

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def residual_norms(self) -> np.ndarray:
        return np.linalg.norm(self.samples - self.target, axis=1)

    def rmse_values(self) -> np.ndarray:
        return self.residual_norms() / np.sqrt(self.d)

    def mean_residual_norm(self) -> float:
        return float(self.residual_norms().mean())

    def mean_rmse(self) -> float:
        return float(self.rmse_values().mean())

    def sample_mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def norm_drift(self) -> float:
        """Mean relative deviation of the perturbed start norms from the anchor."""
        return float(np.mean(np.abs(self.start_norms - self.anchor_norm)) / self.anchor_norm)


def _check_n(n: int) -> int:
    n = int(n)
    if n < 1:
        raise InputError("need at least one draw")
    return n


def _slerp_with_retry(anchor, c0, seed, draw, noise_of) -> tuple[np.ndarray, int]:
    """Per-draw interpolation; redraw noise on degenerate pairs.

    ``noise_of(rng)`` produces one noise vector.  The great-circle formula is
    evaluated in extrapolating mode: at moderate d the draw angle fluctuates
    around pi/2, so arc lengths near the top of the controller bracket would
    otherwise be rejected at random.  Retries are capped: failing repeatedly
    at high d means the request itself is bad.
    """
    last = None
    for attempt in range(_SLERP_RETRIES + 1):
        rng = rng_for(seed, draw, attempt)
        eps = noise_of(rng)
        try:
            return slerp(anchor, eps, c0, extrapolate=True), child_seed(seed, draw, attempt)
        except (InputError, NumericsError) as exc:
            last = exc
    raise NumericsError(
        f"slerp rejected {_SLERP_RETRIES + 1} noise draws for draw {draw}: {last}"
    )


def ccs_full_sample(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    c0: float,
    n: int,
    seed: int,
    cfg: CfgSpec | None = None,
    refine_iters: int = 0,
) -> SampleBatch:
    """Full-inversion spherical perturbation sampling.

    The target is inverted once; each draw interpolates the inverted state
    toward a fresh standard-normal vector by arc length ``c0`` and runs the
    chain back down.
    """
    target_mean = np.asarray(target_mean, dtype=float)
    if not (0.0 <= c0 <= np.pi / 2):
        raise InputError(f"c0 must lie in [0, pi/2], got {c0}")
    n = _check_n(n)
    x_T = ddim_invert(schedule, model, target_mean, schedule.T, cfg, refine_iters)
    starts = np.empty((n, model.d))
    draw_seeds = np.empty(n, dtype=np.uint64)
    for i in range(n):
        starts[i], draw_seeds[i] = _slerp_with_retry(
            x_T, c0, seed, i, lambda rng: rng.standard_normal(model.d)
        )
    samples = ddim_sample_batch(schedule, model, starts, cfg)
    return SampleBatch(
        mechanism="ccs_full",
        target=target_mean,
        scale=float(c0),
        seed=int(seed),
        samples=samples,
        draw_seeds=draw_seeds,
        start_norms=np.linalg.norm(starts, axis=1),
        anchor_norm=float(np.linalg.norm(x_T)),
    )


def ccs_partial_sample(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    c0: float,
    t0: int,
    n: int,
    seed: int,
    cfg_invert: CfgSpec | None = None,
    cfg_sample: CfgSpec | None = None,
    refine_iters: int = 0,
) -> SampleBatch:
    """Partial-inversion spherical perturbation sampling.

    Inversion stops at ``t0``; the noise component there,
    ``eps_t0 = z_t0 - sqrt(abar_t0) * target``, is interpolated toward fresh
    noise drawn from N(0, (1 - abar_t0) I) (matching its scale), the state is
    reassembled, and sampling restarts from ``t0``.  Encoder and decoder of
    the latent pipeline are the identity at this scale.
    """
    target_mean = np.asarray(target_mean, dtype=float)
    if not (0.0 <= c0 <= np.pi / 2):
        raise InputError(f"c0 must lie in [0, pi/2], got {c0}")
    t0 = int(t0)
    if not (1 <= t0 <= schedule.T):
        raise InputError(f"t0 must lie in [1, {schedule.T}]")
    n = _check_n(n)
    z_t0 = ddim_invert(schedule, model, target_mean, t0, cfg_invert, refine_iters)
    abar = schedule.alpha_bar[t0]
    clean = np.sqrt(abar) * target_mean
    eps_t0 = z_t0 - clean
    noise_sd = np.sqrt(1.0 - abar)

    starts = np.empty((n, model.d))
    draw_seeds = np.empty(n, dtype=np.uint64)
    for i in range(n):
        eps_prime, draw_seeds[i] = _slerp_with_retry(
            eps_t0, c0, seed, i, lambda rng: noise_sd * rng.standard_normal(model.d)
        )
        starts[i] = clean + eps_prime
    samples = ddim_sample_batch(schedule, model, starts, cfg_sample, t_start=t0)
    return SampleBatch(
        mechanism="ccs_partial",
        target=target_mean,
        scale=float(c0),
        seed=int(seed),
        samples=samples,
        draw_seeds=draw_seeds,
        start_norms=np.linalg.norm(starts, axis=1),
        anchor_norm=float(np.linalg.norm(z_t0)),
        t0=t0,
    )


def ccs_edit_sample(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    c0: float,
    t0: int,
    n: int,
    seed: int,
    source_cond: str,
    target_cond: str,
    gamma: float = 3.0,
    refine_iters: int = 0,
) -> SampleBatch:
    """Editing variant: invert under the source label, sample under the target label."""
    return ccs_partial_sample(
        schedule,
        model,
        target_mean,
        c0,
        t0,
        n,
        seed,
        cfg_invert=CfgSpec(gamma, source_cond),
        cfg_sample=CfgSpec(gamma, target_cond),
        refine_iters=refine_iters,
    )


def gp_sample(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    s: float,
    n: int,
    seed: int,
    cfg: CfgSpec | None = None,
    refine_iters: int = 0,
) -> SampleBatch:
    """Additive Gaussian perturbation of the inverted state: x' = x_T + s * eps."""
    target_mean = np.asarray(target_mean, dtype=float)
    if s < 0.0:
        raise InputError(f"scale must be >= 0, got {s}")
    n = _check_n(n)
    x_T = ddim_invert(schedule, model, target_mean, schedule.T, cfg, refine_iters)
    starts = np.empty((n, model.d))
    draw_seeds = np.empty(n, dtype=np.uint64)
    for i in range(n):
        starts[i] = x_T + s * rng_for(seed, i).standard_normal(model.d)
        draw_seeds[i] = child_seed(seed, i)
    samples = ddim_sample_batch(schedule, model, starts, cfg)
    return SampleBatch(
        mechanism="gp",
        target=target_mean,
        scale=float(s),
        seed=int(seed),
        samples=samples,
        draw_seeds=draw_seeds,
        start_norms=np.linalg.norm(starts, axis=1),
        anchor_norm=float(np.linalg.norm(x_T)),
    )


def ccdf_sample(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    t0: int,
    n: int,
    seed: int,
    cfg: CfgSpec | None = None,
) -> SampleBatch:
    """Forward-noise the target to ``t0`` and sample back down (no inversion).

        start = sqrt(abar_t0) * target + sqrt(1 - abar_t0) * eps
    """
    target_mean = np.asarray(target_mean, dtype=float)
    t0 = int(t0)
    if not (1 <= t0 <= schedule.T):
        raise InputError(f"t0 must lie in [1, {schedule.T}]")
    n = _check_n(n)
    abar = schedule.alpha_bar[t0]
    clean = np.sqrt(abar) * target_mean
    noise_sd = np.sqrt(1.0 - abar)
    starts = np.empty((n, model.d))
    draw_seeds = np.empty(n, dtype=np.uint64)
    for i in range(n):
        starts[i] = clean + noise_sd * rng_for(seed, i).standard_normal(model.d)
        draw_seeds[i] = child_seed(seed, i)
    samples = ddim_sample_batch(schedule, model, starts, cfg, t_start=t0)
    # Reference radius of the unperturbed start distribution (noising is
    # stochastic, so there is no single anchor state).
    anchor_norm = float(np.sqrt(abar * np.dot(target_mean, target_mean) + (1.0 - abar) * model.d))
    return SampleBatch(
        mechanism="ccdf",
        target=target_mean,
        scale=float(t0),
        seed=int(seed),
        samples=samples,
        draw_seeds=draw_seeds,
        start_norms=np.linalg.norm(starts, axis=1),
        anchor_norm=anchor_norm,
        t0=t0,
    )


@dataclass(frozen=True)
class PerturbationSpec:
    """A mechanism plus its scale and reproducibility token.

    ``scale`` is the arc length for the spherical mechanisms, the additive
    noise scale for ``gp``, and the start timestep for ``ccdf`` (where it
    must be a positive integer; ``t0`` is the intermediate timestep of the
    partial mechanism only).
    """

    mechanism: str
    scale: float
    seed: int
    t0: int | None = None
    cfg_invert: CfgSpec | None = None
    cfg_sample: CfgSpec | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise InputError(f"unknown mechanism {self.mechanism!r}")
        if self.mechanism in ("ccs_full", "ccs_partial") and not (
            0.0 <= self.scale <= np.pi / 2
        ):
            raise InputError(f"c0 must lie in [0, pi/2], got {self.scale}")
        if self.mechanism == "gp" and self.scale < 0.0:
            raise InputError(f"gp scale must be >= 0, got {self.scale}")
        if self.mechanism == "ccdf" and self.scale != int(self.scale):
            raise InputError("ccdf scale is a timestep and must be an integer")
        if self.mechanism == "ccs_partial" and self.t0 is None:
            raise InputError("ccs_partial requires t0")


def run_mechanism(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    spec: PerturbationSpec,
    n: int,
    refine_iters: int = 0,
) -> SampleBatch:
    """Dispatch a :class:`PerturbationSpec` to its mechanism."""
    if spec.mechanism == "ccs_full":
        return ccs_full_sample(
            schedule, model, target_mean, spec.scale, n, spec.seed,
            cfg=spec.cfg_sample, refine_iters=refine_iters,
        )
    if spec.mechanism == "ccs_partial":
        return ccs_partial_sample(
            schedule, model, target_mean, spec.scale, spec.t0, n, spec.seed,
            cfg_invert=spec.cfg_invert, cfg_sample=spec.cfg_sample,
            refine_iters=refine_iters,
        )
    if spec.mechanism == "gp":
        return gp_sample(
            schedule, model, target_mean, spec.scale, n, spec.seed,
            cfg=spec.cfg_sample, refine_iters=refine_iters,
        )
    return ccdf_sample(
        schedule, model, target_mean, int(spec.scale), n, spec.seed,
        cfg=spec.cfg_sample,
    )


# ----------------------------------------------------------------------
# Controller
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ControllerConfig:
    """Bisection inputs: target diversity, tolerance, batch size, iteration cap."""

    mse_target: float
    tol: float
    batch_size: int = 24
    max_iters: int = 6
    seed: int = 0
    metric: str = "rmse"  # "rmse" (per-coordinate) or "l2" (raw residual norm)

    def __post_init__(self):
        if self.mse_target <= 0.0:
            raise InputError("mse_target must be positive")
        if not (0.0 < self.tol < self.mse_target):
            raise InputError("need 0 < tol < mse_target")
        if self.batch_size < 2:
            raise InputError("batch_size must be >= 2")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if self.metric not in ("rmse", "l2"):
            raise InputError(f"unknown metric {self.metric!r}")

    def measure(self, batch: SampleBatch) -> float:
        return batch.mean_rmse() if self.metric == "rmse" else batch.mean_residual_norm()


@dataclass(frozen=True)
class ControllerStep:
    c_low: float
    c_high: float
    scale: float
    measured: float


@dataclass(frozen=True)
class ControllerTrace:
    iterations: tuple[ControllerStep, ...]
    converged: bool
    final_scale: float
    boundary_eval: float | None = None  # measurement at the bracket's top, when taken


def default_gp_scale_max(d: int) -> float:
    """Upper bisection bracket for the additive mechanism: half the noise radius."""
    return 0.5 * np.sqrt(d)


def controller_tune(
    sample_at: Callable[[float, int, int], SampleBatch],
    config: ControllerConfig,
    scale_bounds: tuple[float, float],
    integer_scale: bool = False,
) -> tuple[float, ControllerTrace]:
    """Bisect a mechanism's scale until measured diversity hits the target.

    ``sample_at(scale, batch_size, seed)`` draws one batch.  Each iteration
    uses a fresh child seed so the chosen scale is not tuned to one noise
    realization.  Integer scales (the ``ccdf`` timestep) bisect on integers
    with ties toward the smaller value and finish at the closest achievable
    measurement once the bracket cannot narrow.

    If the bracket collapses toward the upper bound without convergence, the
    bound itself is evaluated and attached to the trace, and the run reports
    ``converged=False``: the target is outside the mechanism's reach.
    """
    lo, hi = float(scale_bounds[0]), float(scale_bounds[1])
    if not lo < hi:
        raise InputError("scale_bounds must be increasing")

    def midpoint(a: float, b: float) -> float:
        if integer_scale:
            return float(int((a + b) // 2))
        return 0.5 * (a + b)

    steps: list[ControllerStep] = []
    scale = midpoint(lo, hi)
    converged = False
    best_scale, best_gap = scale, np.inf
    for it in range(config.max_iters):
        batch = sample_at(scale, config.batch_size, child_seed(config.seed, it))
        measured = config.measure(batch)
        steps.append(ControllerStep(lo, hi, scale, measured))
        gap = abs(measured - config.mse_target)
        if gap < best_gap:
            best_scale, best_gap = scale, gap
        if gap < config.tol:
            converged = True
            break
        if measured > config.mse_target:
            hi, scale = scale, midpoint(lo, scale)
        else:
            lo, scale = scale, midpoint(scale, hi)
        if integer_scale and hi - lo <= 1:
            break

    boundary_eval = None
    if converged:
        final = steps[-1].scale
    else:
        # Keep the reported scale inside the final bracket (the best-gap
        # candidate may predate the last halving).
        final = min(max(best_scale, lo), hi)
        if all(s.measured < config.mse_target for s in steps):
            # Every probe fell short: check whether even the top of the
            # bracket can reach the target.
            top = float(scale_bounds[1]) if not integer_scale else float(int(scale_bounds[1]))
            batch = sample_at(top, config.batch_size, child_seed(config.seed, config.max_iters))
            boundary_eval = config.measure(batch)
            if abs(boundary_eval - config.mse_target) < config.tol:
                converged = True
            final = top
    return final, ControllerTrace(tuple(steps), converged, float(final), boundary_eval)


def mechanism_handle(
    schedule: NoiseSchedule,
    model: GaussianMixtureModel,
    target_mean: np.ndarray,
    mechanism: str,
    t0: int | None = None,
    cfg_invert: CfgSpec | None = None,
    cfg_sample: CfgSpec | None = None,
    refine_iters: int = 0,
    gp_scale_max: float | None = None,
):
    """(sample_at, scale_bounds, integer_scale) triple for :func:`controller_tune`."""
    if mechanism not in MECHANISMS:
        raise InputError(f"unknown mechanism {mechanism!r}")

    if mechanism == "ccs_full":
        bounds, integer = (0.0, np.pi / 2), False

        def sample_at(scale, batch_size, seed):
            return ccs_full_sample(
                schedule, model, target_mean, scale, batch_size, seed,
                cfg=cfg_sample, refine_iters=refine_iters,
            )

    elif mechanism == "ccs_partial":
        if t0 is None:
            raise InputError("ccs_partial requires t0")
        bounds, integer = (0.0, np.pi / 2), False

        def sample_at(scale, batch_size, seed):
            return ccs_partial_sample(
                schedule, model, target_mean, scale, t0, batch_size, seed,
                cfg_invert=cfg_invert, cfg_sample=cfg_sample,
                refine_iters=refine_iters,
            )

    elif mechanism == "gp":
        top = default_gp_scale_max(model.d) if gp_scale_max is None else float(gp_scale_max)
        bounds, integer = (0.0, top), False

        def sample_at(scale, batch_size, seed):
            return gp_sample(
                schedule, model, target_mean, scale, batch_size, seed,
                cfg=cfg_sample, refine_iters=refine_iters,
            )

    else:  # ccdf
        bounds, integer = (1.0, float(schedule.T)), True

        def sample_at(scale, batch_size, seed):
            return ccdf_sample(
                schedule, model, target_mean, int(scale), batch_size, seed,
                cfg=cfg_sample,
            )

    return sample_at, bounds, integer
