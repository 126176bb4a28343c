# cython: language_level=3
"""Compiled versions of the hot loops; semantics mirror ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def best_split(const double[::1] x, const double[::1] y, Py_ssize_t min_leaf, double tol):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, k, best_pos = -1
    cdef double best_sse = INFINITY
    cdef double mean_l = 0.0, m2_l = 0.0, mean_r = 0.0, m2_r = 0.0
    cdef double delta, sse
    if n < 2 * min_leaf or min_leaf < 1:
        return -1, INFINITY
    cdef double[::1] suffix = np.empty(n + 1, dtype=np.float64)
    suffix[n] = 0.0
    for k in range(n - 1, -1, -1):
        i = n - k
        delta = y[k] - mean_r
        mean_r += delta / i
        m2_r += delta * (y[k] - mean_r)
        suffix[k] = m2_r
    for i in range(1, n):
        delta = y[i - 1] - mean_l
        mean_l += delta / i
        m2_l += delta * (y[i - 1] - mean_l)
        if i < min_leaf or n - i < min_leaf:
            continue
        if not x[i - 1] < x[i]:
            continue
        sse = m2_l + suffix[i]
        if sse < best_sse - tol:
            best_sse = sse
            best_pos = i
    return best_pos, best_sse


def cpu_load_batch(const double[::1] prev_idle, const double[::1] prev_total,
                   const double[::1] cur_idle, const double[::1] cur_total):
    cdef Py_ssize_t n = prev_idle.shape[0], k
    cdef double d_idle, d_total, load
    cdef long negative = 0, zero = 0, bound = 0
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for k in range(n):
        d_total = cur_total[k] - prev_total[k]
        d_idle = cur_idle[k] - prev_idle[k]
        if d_total < 0 or d_total != d_total:
            negative += 1
            d_total = 0.0
        if d_idle < 0 or d_idle != d_idle:
            negative += 1
            d_idle = 0.0
        if d_total == 0.0:
            zero += 1
            res[k] = 0.0
            continue
        load = (d_total - d_idle) / d_total
        if load > 1.0:
            bound += 1
            load = 1.0
        elif load < 0.0:
            bound += 1
            load = 0.0
        res[k] = load
    return out, negative, zero, bound


def antiderivative(const double[::1] t, const double[::1] v, bint cumulative, const double[::1] q):
    cdef Py_ssize_t n = t.shape[0], m = q.shape[0], j, lo, hi, mid
    cdef double h, dt, slope
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] acc = np.empty(n, dtype=np.float64)
    acc[0] = 0.0
    if not cumulative:
        for j in range(1, n):
            acc[j] = acc[j - 1] + 0.5 * (v[j - 1] + v[j]) * (t[j] - t[j - 1])
    for j in range(m):
        # rightmost k with t[k] <= q, capped at n - 2
        lo = 0
        hi = n - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if t[mid] <= q[j]:
                lo = mid
            else:
                hi = mid
        h = t[lo + 1] - t[lo]
        dt = q[j] - t[lo]
        slope = (v[lo + 1] - v[lo]) / h
        if cumulative:
            res[j] = v[lo] + slope * dt
        else:
            res[j] = acc[lo] + v[lo] * dt + 0.5 * slope * dt * dt
    return out
