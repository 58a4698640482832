"""Analytic Gaussian-mixture data distributions with exact noisy-time scores.

A mixture ``p0 = sum_k w_k N(mu_k, Sigma_k)`` pushed through the
variance-preserving forward model ``x_t = sqrt(abar) x_0 + sqrt(1-abar) eps``
stays a mixture at every noise level:

    component k of p_abar has mean sqrt(abar) mu_k
    and covariance abar * Sigma_k + (1 - abar) * I.

Because the marginals are closed-form, the log-density, its gradient (the
score) and its Hessian are exact, so every sampler in this package runs on
ground truth instead of a learned noise predictor.  All operations are pure
functions of ``(x, abar)`` and the model is immutable after construction.

Conditioning is label-based: each component may carry a class tag, and the
conditional score is the score of the label-restricted sub-mixture with
renormalized weights.  Guided scores combine both:

    s = s_uncond + gamma * (s_cond - s_uncond)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import InputError

__all__ = ["CfgSpec", "GaussianMixtureModel"]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class CfgSpec:
    """Classifier-free-guidance combination: weight ``gamma`` on ``condition``.

    ``condition=None`` means unconditional sampling regardless of gamma;
    ``gamma=1`` collapses to the pure conditional score, ``gamma=0`` to the
    unconditional one.
    """

    gamma: float = 1.0
    condition: str | None = None

    def __post_init__(self):
        if self.gamma < 0.0:
            raise InputError(f"guidance weight must be >= 0, got {self.gamma}")

    def is_unconditional(self) -> bool:
        return self.condition is None


class GaussianMixtureModel:
    """Exact score model for a K-component Gaussian mixture in d dimensions.

    Args:
        weights: K positive weights; normalized to sum to one.
        means: (K, d) component means.
        covariances: (K, d) per-coordinate variances (diagonal model) or
            (K, d, d) full covariance matrices (symmetric positive-definite).
        labels: optional K class tags for conditional sampling.
    """

    MAX_FULL_DIM = 256  # dense solves only; diagonal models have no cap

    def __init__(self, weights, means, covariances, labels=None):
        w = np.asarray(weights, dtype=float)
        m = np.atleast_2d(np.asarray(means, dtype=float))
        c = np.asarray(covariances, dtype=float)
        if w.ndim != 1 or w.size != m.shape[0]:
            raise InputError("weights and means disagree on component count")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise InputError("weights must be positive and finite")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InputError(f"weights must sum to 1, got {w.sum():.12g}")
        w = w / w.sum()

        if c.ndim == 2:
            if c.shape != m.shape:
                raise InputError("diagonal covariances must have shape (K, d)")
            if np.any(c <= 0.0):
                raise InputError("diagonal variances must be positive")
            self._diag = True
        elif c.ndim == 3:
            K, d = m.shape
            if c.shape != (K, d, d):
                raise InputError("full covariances must have shape (K, d, d)")
            if d > self.MAX_FULL_DIM:
                raise InputError(
                    f"full-covariance models capped at d={self.MAX_FULL_DIM}, got {d}"
                )
            for k in range(K):
                if not np.allclose(c[k], c[k].T, atol=1e-12):
                    raise InputError(f"covariance {k} is not symmetric")
                try:
                    np.linalg.cholesky(c[k])
                except np.linalg.LinAlgError:
                    raise InputError(f"covariance {k} is not positive-definite") from None
            self._diag = False
        else:
            raise InputError("covariances must be (K, d) diagonal or (K, d, d) full")

        if labels is not None:
            labels = tuple(str(tag) for tag in labels)
            if len(labels) != m.shape[0]:
                raise InputError("labels must match the component count")

        self.weights = w
        self.means = m
        self.covariances = c
        self.labels = labels
        self._log_weights = np.log(w)
        self._conditionals: dict[str, GaussianMixtureModel] = {}

    # ------------------------------------------------------------------
    # Construction helpers
    # ------------------------------------------------------------------
    @classmethod
    def single(cls, mean, variance=1.0) -> "GaussianMixtureModel":
        """One isotropic component (``score(x) = -(x - sqrt(abar) mu) / s_t``)."""
        mean = np.asarray(mean, dtype=float)
        return cls([1.0], mean[None, :], np.full((1, mean.size), float(variance)))

    @classmethod
    def standard(cls, d: int) -> "GaussianMixtureModel":
        """Standard normal in d dimensions; invariant under the forward model."""
        return cls.single(np.zeros(d), 1.0)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self._diag

    # ------------------------------------------------------------------
    # Noisy-time marginals
    # ------------------------------------------------------------------
    def _check_abar(self, abar: float) -> float:
        abar = float(abar)
        if not (0.0 < abar <= 1.0):
            raise InputError(f"abar must lie in (0, 1], got {abar}")
        return abar

    def marginal_params(self, abar: float):
        """(means_t, covs_t) of the noise-level-``abar`` marginal mixture."""
        abar = self._check_abar(abar)
        means_t = np.sqrt(abar) * self.means
        if self._diag:
            covs_t = abar * self.covariances + (1.0 - abar)
        else:
            eye = np.eye(self.d)
            covs_t = abar * self.covariances + (1.0 - abar) * eye
        return means_t, covs_t

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise InputError(f"state has length {x.shape[-1]}, model has d={self.d}")
        if not np.all(np.isfinite(x)):
            raise InputError("state contains non-finite values")
        return x

    def _component_stats(self, x: np.ndarray, abar: float):
        """Per-component log-density (without weights) and score at ``x``.

        Returns ``(logpdf, scores)`` with shapes (..., K) and (..., K, d).
        """
        means_t, covs_t = self.marginal_params(abar)
        diff = x[..., None, :] - means_t  # (..., K, d)
        if self._diag:
            ivar = 1.0 / covs_t  # (K, d)
            quad = np.einsum("...kd,kd->...k", diff * diff, ivar)
            logdet = np.sum(np.log(covs_t), axis=1)  # (K,)
            scores = -diff * ivar
        else:
            quad = np.empty(diff.shape[:-1])
            scores = np.empty_like(diff)
            logdet = np.empty(self.K)
            for k in range(self.K):
                chol = cho_factor(covs_t[k], lower=True)
                sol = cho_solve(chol, diff[..., k, :].reshape(-1, self.d).T).T
                sol = sol.reshape(diff[..., k, :].shape)
                quad[..., k] = np.einsum("...d,...d->...", diff[..., k, :], sol)
                scores[..., k, :] = -sol
                logdet[k] = 2.0 * np.sum(np.log(np.diag(chol[0])))
        logpdf = -0.5 * (self.d * _LOG_2PI + logdet + quad)
        return logpdf, scores

    def posterior(self, x, abar: float) -> np.ndarray:
        """Posterior component responsibilities at ``(x, abar)``; rows sum to 1."""
        x = self._check_x(x)
        logpdf, _ = self._component_stats(x, abar)
        ll = logpdf + self._log_weights
        return np.exp(ll - logsumexp(ll, axis=-1, keepdims=True))

    # ------------------------------------------------------------------
    # Density, score, Hessian
    # ------------------------------------------------------------------
    def log_density(self, x, abar: float):
        """Log of the noise-level-``abar`` mixture density, log-sum-exp stable."""
        x = self._check_x(x)
        logpdf, _ = self._component_stats(x, abar)
        out = logsumexp(logpdf + self._log_weights, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def score(self, x, abar: float):
        """Exact gradient of :meth:`log_density` in ``x``; batched over leading axes."""
        x = self._check_x(x)
        logpdf, scores = self._component_stats(x, abar)
        ll = logpdf + self._log_weights
        post = np.exp(ll - logsumexp(ll, axis=-1, keepdims=True))
        return np.einsum("...k,...kd->...d", post, scores)

    def hessian(self, x, abar: float) -> np.ndarray:
        """Exact Hessian of :meth:`log_density` at a single state ``x``.

        H = sum_k pi_k (-S_k^{-1} + s_k s_k^T) - s s^T, where pi are the
        posterior responsibilities and s_k the per-component scores.
        """
        x = self._check_x(x)
        if x.ndim != 1:
            raise InputError("hessian expects a single state vector")
        abar = self._check_abar(abar)
        logpdf, scores = self._component_stats(x, abar)
        ll = logpdf + self._log_weights
        post = np.exp(ll - logsumexp(ll))
        _, covs_t = self.marginal_params(abar)

        H = np.zeros((self.d, self.d))
        for k in range(self.K):
            if self._diag:
                H -= post[k] * np.diag(1.0 / covs_t[k])
            else:
                chol = cho_factor(covs_t[k], lower=True)
                H -= post[k] * cho_solve(chol, np.eye(self.d))
            H += post[k] * np.outer(scores[k], scores[k])
        s = post @ scores
        H -= np.outer(s, s)
        return 0.5 * (H + H.T)  # kill round-off asymmetry

    # ------------------------------------------------------------------
    # Conditioning
    # ------------------------------------------------------------------
    def conditional(self, condition: str) -> "GaussianMixtureModel":
        """Sub-mixture of the components tagged ``condition`` (weights renormalized)."""
        if self.labels is None:
            raise InputError("model has no labels; cannot condition")
        condition = str(condition)
        if condition in self._conditionals:
            return self._conditionals[condition]
        mask = np.array([tag == condition for tag in self.labels])
        if not mask.any():
            raise InputError(f"unknown condition tag {condition!r}")
        sub = GaussianMixtureModel(
            self.weights[mask] / self.weights[mask].sum(),
            self.means[mask],
            self.covariances[mask],
            labels=tuple(tag for tag in self.labels if tag == condition),
        )
        self._conditionals[condition] = sub
        return sub

    def cfg_score(self, x, abar: float, cfg: CfgSpec | None = None):
        """Guided score ``s_uncond + gamma (s_cond - s_uncond)``."""
        if cfg is None or cfg.is_unconditional():
            return self.score(x, abar)
        s_cond = self.conditional(cfg.condition).score(x, abar)
        if cfg.gamma == 1.0:
            return s_cond
        s_null = self.score(x, abar)
        return s_null + cfg.gamma * (s_cond - s_null)

    def cfg_hessian(self, x, abar: float, cfg: CfgSpec | None = None) -> np.ndarray:
        """Jacobian of :meth:`cfg_score` in ``x``."""
        if cfg is None or cfg.is_unconditional():
            return self.hessian(x, abar)
        H_cond = self.conditional(cfg.condition).hessian(x, abar)
        if cfg.gamma == 1.0:
            return H_cond
        H_null = self.hessian(x, abar)
        return H_null + cfg.gamma * (H_cond - H_null)

    # ------------------------------------------------------------------
    # Analytic bounds and sampling
    # ------------------------------------------------------------------
    def shares_covariance(self) -> bool:
        return all(np.array_equal(self.covariances[0], self.covariances[k])
                   for k in range(1, self.K))

    def hessian_norm_bound(self, abar: float) -> float:
        """Upper bound on ``sup_x ||hessian(x, abar)||_2``.

        For a shared covariance S the Hessian is -S^{-1} plus the posterior
        covariance of the fixed points ``S^{-1} sqrt(abar) mu_k``, whose norm
        is at most (diameter/2)^2, so the spectrum lies inside
        ``[-1/lmin(S), D^2/4]``.  Mixtures with unequal covariances have no
        such closed form here.
        """
        if not self.shares_covariance():
            raise InputError("analytic Hessian bound requires a shared covariance")
        abar = self._check_abar(abar)
        means_t, covs_t = self.marginal_params(abar)
        if self._diag:
            lmin = float(np.min(covs_t[0]))
            centers = means_t / covs_t[0]
        else:
            lmin = float(np.min(np.linalg.eigvalsh(covs_t[0])))
            centers = np.linalg.solve(covs_t[0], means_t.T).T
        diameter = 0.0
        for i in range(self.K):
            for j in range(i + 1, self.K):
                diameter = max(diameter, float(np.linalg.norm(centers[i] - centers[j])))
        return max(1.0 / lmin, 0.25 * diameter * diameter)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` points from the clean data distribution ``p0``."""
        comps = rng.choice(self.K, size=n, p=self.weights)
        out = np.empty((n, self.d))
        for k in range(self.K):
            idx = np.where(comps == k)[0]
            if idx.size == 0:
                continue
            z = rng.standard_normal((idx.size, self.d))
            if self._diag:
                out[idx] = self.means[k] + z * np.sqrt(self.covariances[k])
            else:
                chol = np.linalg.cholesky(self.covariances[k])
                out[idx] = self.means[k] + z @ chol.T
        return out

    def to_config(self) -> dict:
        cfg = {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariance": (
                {"diag": self.covariances.tolist()}
                if self._diag
                else {"full": self.covariances.tolist()}
            ),
        }
        if self.labels is not None:
            cfg["labels"] = list(self.labels)
        return cfg

    def __repr__(self) -> str:
        kind = "diag" if self._diag else "full"
        return f"GaussianMixtureModel(K={self.K}, d={self.d}, {kind})"
