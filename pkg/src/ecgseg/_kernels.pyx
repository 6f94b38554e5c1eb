# cython: language_level=3
"""Compiled inner loops: Viterbi recursion and direct correlation.

``viterbi_kernel`` mirrors ``ecgseg._fallback`` operation for operation, so
both backends return bit-identical paths and scores. The correlation sums in
a different order than numpy and agrees to rounding.
"""
import numpy as np

from libc.math cimport INFINITY


def viterbi_kernel(const double[:, ::1] log_emis,
                   const double[:, ::1] log_trans,
                   const double[::1] log_init):
    """Return ``(path, log_prob)`` of the best state sequence.

    Ties go to the lower state index, both when choosing a predecessor and
    when choosing the final state.
    """
    cdef Py_ssize_t T = log_emis.shape[0]
    cdef Py_ssize_t K = log_emis.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double best, cand

    delta_np = np.empty(K, dtype=np.float64)
    prev_np = np.empty(K, dtype=np.float64)
    back_np = np.zeros((T, K), dtype=np.int32)
    path_np = np.empty(T, dtype=np.int64)
    cdef double[::1] delta = delta_np
    cdef double[::1] prev = prev_np
    cdef int[:, ::1] back = back_np
    cdef long long[::1] path = path_np

    with nogil:
        for j in range(K):
            delta[j] = log_init[j] + log_emis[0, j]
        for t in range(1, T):
            for j in range(K):
                prev[j] = delta[j]
            for j in range(K):
                best = prev[0] + log_trans[0, j]
                best_i = 0
                for i in range(1, K):
                    cand = prev[i] + log_trans[i, j]
                    if cand > best:
                        best = cand
                        best_i = i
                delta[j] = best + log_emis[t, j]
                back[t, j] = <int>best_i
        best = delta[0]
        best_i = 0
        for j in range(1, K):
            if delta[j] > best:
                best = delta[j]
                best_i = j
        path[T - 1] = best_i
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_np, best

