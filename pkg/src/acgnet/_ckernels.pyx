# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in :mod:`acgnet._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def sparsify_rows(combined, double lam, Py_ssize_t k):
    cdef double[:, ::1] a = np.ascontiguousarray(combined, dtype=np.float64)
    cdef Py_ssize_t n_rows = a.shape[0], n_cols = a.shape[1]
    out_arr = np.zeros((n_rows, n_cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if n_cols == 0 or k <= 0:
        return out_arr
    if k > n_cols:
        k = n_cols
    cdef Py_ssize_t *best = <Py_ssize_t *> malloc(k * sizeof(Py_ssize_t))
    if best == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, j, pos, filled
    cdef double v
    try:
        for i in range(n_rows):
            filled = 0
            # only entries above lam can survive, and they always outrank
            # entries at or below lam, so select among them directly
            for j in range(n_cols):
                v = a[i, j]
                if not (v > lam):
                    continue
                if filled == k and not (v > a[i, best[k - 1]]):
                    continue
                pos = filled if filled < k else k - 1
                # strict comparison keeps the earlier index ahead on ties
                while pos > 0 and v > a[i, best[pos - 1]]:
                    best[pos] = best[pos - 1]
                    pos -= 1
                best[pos] = j
                if filled < k:
                    filled += 1
            for pos in range(filled):
                out[i, best[pos]] = a[i, best[pos]]
    finally:
        free(best)
    return out_arr


def epm_term(enhanced, original, sparse_adj, weights):
    cdef double[:, ::1] fe = np.ascontiguousarray(enhanced, dtype=np.float64)
    cdef double[:, ::1] fo = np.ascontiguousarray(original, dtype=np.float64)
    cdef double[:, ::1] adj = np.ascontiguousarray(sparse_adj, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t t = fe.shape[0], d = fe.shape[1]
    grad_arr = np.zeros((t, d), dtype=np.float64)
    cdef double[:, ::1] g = grad_arr
    cdef Py_ssize_t i, j, c
    cdef double loss = 0.0, diff, wj, acc
    for i in range(t):
        for j in range(t):
            if not (adj[i, j] > 0.0):
                continue
            wj = w[j]
            acc = 0.0
            for c in range(d):
                diff = fe[i, c] - fo[j, c]
                acc += diff * diff
                g[i, c] += 2.0 * wj * diff
            loss += wj * acc
    return loss, grad_arr


def greedy_match(ious, double threshold):
    cdef double[:, ::1] m = np.ascontiguousarray(ious, dtype=np.float64)
    cdef Py_ssize_t n_props = m.shape[0], n_gts = m.shape[1]
    tp_arr = np.zeros(n_props, dtype=np.int8)
    match_arr = np.full(n_props, -1, dtype=np.int64)
    taken_arr = np.zeros(n_gts, dtype=np.int8)
    cdef cnp.int8_t[::1] tp = tp_arr
    cdef cnp.int64_t[::1] match = match_arr
    cdef cnp.int8_t[::1] taken = taken_arr
    cdef Py_ssize_t i, j, bj
    cdef double bv
    for i in range(n_props):
        bj = -1
        bv = 0.0
        for j in range(n_gts):
            if taken[j]:
                continue
            if bj < 0 or m[i, j] > bv:
                bj = j
                bv = m[i, j]
        if bj >= 0 and bv >= threshold:
            taken[bj] = 1
            tp[i] = 1
            match[i] = bj
    return tp_arr, match_arr
