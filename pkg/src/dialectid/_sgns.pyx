# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled skip-gram negative-sampling update loop.

Must stay numerically in step with ``_sgns_py.train_pairs``.
"""

from libc.math cimport exp, log

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def train_pairs(float[:, ::1] w_in, float[:, ::1] w_out,
                const int[::1] comp_ptr, const int[::1] comp_idx,
                const int[::1] centers, const int[::1] contexts,
                const int[:, ::1] negatives, double lr):
    """Apply one SGD step per (center, context) pair; returns summed loss."""
    cdef Py_ssize_t n_pairs = centers.shape[0]
    cdef Py_ssize_t n_neg = negatives.shape[1]
    cdef Py_ssize_t dim = w_in.shape[1]
    cdef Py_ssize_t p, k, d, c, start, stop, target
    cdef double score, g, sig, label, scale, loss = 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h_arr = np.zeros(dim)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gh_arr = np.zeros(dim)
    cdef double[::1] h = h_arr
    cdef double[::1] gh = gh_arr

    with nogil:
        for p in range(n_pairs):
            c = centers[p]
            start = comp_ptr[c]
            stop = comp_ptr[c + 1]
            for d in range(dim):
                h[d] = 0.0
                gh[d] = 0.0
            for k in range(start, stop):
                for d in range(dim):
                    h[d] += w_in[comp_idx[k], d]
            for k in range(-1, n_neg):
                if k < 0:
                    target = contexts[p]
                    label = 1.0
                else:
                    target = negatives[p, k]
                    if target == contexts[p]:
                        continue
                    label = 0.0
                score = 0.0
                for d in range(dim):
                    score += h[d] * w_out[target, d]
                sig = _sigmoid(score)
                if label > 0:
                    loss -= log(sig + 1e-12)
                else:
                    loss -= log(1.0 - sig + 1e-12)
                g = (label - sig) * lr
                for d in range(dim):
                    gh[d] += g * w_out[target, d]
                    w_out[target, d] += <float>(g * h[d])
            scale = 1.0 / (stop - start)
            for k in range(start, stop):
                for d in range(dim):
                    w_in[comp_idx[k], d] += <float>(gh[d] * scale)
    return loss
