# Compiled DTW kernel: two-row dynamic program over the |a_i - b_j| cost
# matrix, optional Sakoe-Chiba band, optional row-min early abandoning.
# Must return values bit-identical to penlive._dtw_py.dtw.

from libc.math cimport fabs, INFINITY

import numpy as np


def dtw(const double[::1] a, const double[::1] b, int band=-1, double ub=INFINITY):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j, jlo, jhi
    cdef double cost, best, row_min, av
    cdef double[::1] prev = np.empty(m, dtype=np.float64)
    cdef double[::1] cur = np.empty(m, dtype=np.float64)
    cdef double[::1] tmp

    for j in range(m):
        prev[j] = INFINITY
        cur[j] = INFINITY

    for i in range(n):
        tmp = prev
        prev = cur
        cur = tmp
        av = a[i]
        if band >= 0:
            jlo = i - band if i - band > 0 else 0
            jhi = i + band if i + band < m - 1 else m - 1
        else:
            jlo = 0
            jhi = m - 1
        for j in range(m):
            cur[j] = INFINITY
        row_min = INFINITY
        for j in range(jlo, jhi + 1):
            cost = fabs(av - b[j])
            if i == 0 and j == 0:
                cur[j] = cost
            else:
                best = INFINITY
                if i > 0:
                    if prev[j] < best:
                        best = prev[j]
                    if j > 0 and prev[j - 1] < best:
                        best = prev[j - 1]
                if j > 0 and cur[j - 1] < best:
                    best = cur[j - 1]
                cur[j] = cost + best
            if cur[j] < row_min:
                row_min = cur[j]
        if ub != INFINITY and row_min > ub:
            return INFINITY
    return cur[m - 1]
