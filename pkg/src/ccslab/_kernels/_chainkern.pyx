# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batched sampling chain (see ``_ref.py`` for the contract).

Fuses the per-step mixture-score evaluation and state update over the whole
chain, avoiding the per-step temporaries of the NumPy path.  Worth having
because every experiment in the package reduces to thousands of short chains
over small-d mixtures, where allocation overhead dominates.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite

cnp.import_array()


def run_mixture_chain(
    double[:, ::1] x0,
    double[::1] eta,
    double[::1] lam,
    double[:, :, ::1] means,
    double[:, :, ::1] ivars,
    double[:, ::1] lognorm,
    double[::1] log_w_a,
    double[::1] log_w_b,
    double gamma,
):
    from ..errors import NumericsError

    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t d = x0.shape[1]
    cdef Py_ssize_t n_steps = eta.shape[0]
    cdef Py_ssize_t K = means.shape[1]

    out_arr = np.array(x0, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] x = out_arr
    ll_arr = np.empty(K, dtype=np.float64)
    grads_arr = np.empty((K, d), dtype=np.float64)
    score_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] ll = ll_arr
    cdef double[:, ::1] grads = grads_arr
    cdef double[::1] score = score_arr

    cdef Py_ssize_t s, i, j, k
    cdef double q, diff, e, l, wsum_a, wsum_b, w, ll_max_a, ll_max_b, sa, sb
    cdef bint ok = True
    cdef bint guided = gamma != 0.0
    cdef Py_ssize_t bad_step = 0

    for s in range(n_steps):
        e = eta[s]
        l = lam[s]
        for i in range(n):
            # Per-component unweighted log-density and score at x[i].
            for k in range(K):
                q = 0.0
                for j in range(d):
                    diff = x[i, j] - means[s, k, j]
                    grads[k, j] = -ivars[s, k, j] * diff
                    q += ivars[s, k, j] * diff * diff
                ll[k] = lognorm[s, k] - 0.5 * q

            # Unconditional posterior average (softmax over components).
            ll_max_a = -1e300
            for k in range(K):
                if ll[k] + log_w_a[k] > ll_max_a:
                    ll_max_a = ll[k] + log_w_a[k]
            wsum_a = 0.0
            for j in range(d):
                score[j] = 0.0
            for k in range(K):
                w = exp(ll[k] + log_w_a[k] - ll_max_a)
                wsum_a += w
                for j in range(d):
                    score[j] += w * grads[k, j]
            for j in range(d):
                score[j] /= wsum_a

            if guided:
                ll_max_b = -1e300
                for k in range(K):
                    if ll[k] + log_w_b[k] > ll_max_b:
                        ll_max_b = ll[k] + log_w_b[k]
                wsum_b = 0.0
                for k in range(K):
                    wsum_b += exp(ll[k] + log_w_b[k] - ll_max_b)
                for j in range(d):
                    sa = score[j]
                    sb = 0.0
                    for k in range(K):
                        sb += exp(ll[k] + log_w_b[k] - ll_max_b) * grads[k, j]
                    sb /= wsum_b
                    score[j] = sa + gamma * (sb - sa)

            for j in range(d):
                x[i, j] = e * x[i, j] + l * score[j]
                if not isfinite(x[i, j]):
                    ok = False
        if not ok:
            bad_step = n_steps - s
            break

    if not ok:
        raise NumericsError("non-finite state in sampling chain", step=bad_step)
    return out_arr
