"""NumPy reference implementation of the batched sampling chain.

Semantics are the contract; the compiled kernel in ``_chainkern.pyx`` must
agree with this module to floating-point reordering error.  One call runs the
full deterministic chain for a batch of states over a diagonal-covariance
mixture whose per-step marginal parameters were precomputed by the caller:

    for each step s:
        score_i = guided mixture score of x_i at that step's noise level
        x_i     = eta[s] * x_i + lam[s] * score_i

Guidance reuses the per-component Gaussian log-densities: the unconditional
and conditional scores differ only in their component log-weights
(``log_w_a`` and ``log_w_b``; excluded components carry -inf), combined as
``s_a + gamma * (s_b - s_a)``.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericsError


def _posterior_score(comp_ll, grads, log_w):
    """Posterior-weighted average of per-component scores.

    comp_ll: (n, K) unweighted component log-densities.
    grads:   (n, K, d) per-component scores.
    log_w:   (K,) component log-weights (may contain -inf).
    """
    ll = comp_ll + log_w
    ll_max = np.max(ll, axis=1, keepdims=True)
    w = np.exp(ll - ll_max)
    w /= np.sum(w, axis=1, keepdims=True)
    return np.einsum("nk,nkd->nd", w, grads)


def run_mixture_chain(x0, eta, lam, means, ivars, lognorm, log_w_a, log_w_b, gamma):
    """Run the deterministic chain for a batch of start states.

    Args:
        x0: (n, d) start states.
        eta, lam: (S,) per-step coefficients, in visiting order.
        means: (S, K, d) per-step component means of the noisy marginal.
        ivars: (S, K, d) per-step inverse variances.
        lognorm: (S, K) per-step Gaussian log-normalizers.
        log_w_a: (K,) unconditional component log-weights.
        log_w_b: (K,) conditional component log-weights (-inf excludes).
        gamma: guidance weight; 0 disables the conditional branch.

    Returns:
        (n, d) endpoint states.
    """
    x = np.array(x0, dtype=float, copy=True)
    n_steps = eta.shape[0]
    # Overflow is detected, not trapped: the finiteness check below turns it
    # into a step-indexed error.
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(n_steps):
            diff = x[:, None, :] - means[s]  # (n, K, d)
            quad = np.einsum("nkd,kd->nk", diff * diff, ivars[s])
            comp_ll = lognorm[s] - 0.5 * quad
            grads = -diff * ivars[s]
            score = _posterior_score(comp_ll, grads, log_w_a)
            if gamma != 0.0:
                score_c = _posterior_score(comp_ll, grads, log_w_b)
                score = score + gamma * (score_c - score)
            x = eta[s] * x + lam[s] * score
            if not np.all(np.isfinite(x)):
                raise NumericsError(
                    "non-finite state in sampling chain", step=n_steps - s
                )
    return x
