# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot graph loops (cascade, saved weight, LDP).

Twin of ``_pykern.py``; both must return identical values for the same
inputs. Selected at import time by ``mcnlearn._kernels``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def reachable_mask(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                   Py_ssize_t n, cnp.int32_t[::1] seeds):
    visited_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] visited = visited_arr
    stack_arr = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] stack = stack_arr
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t i, v, u, j

    for i in range(seeds.shape[0]):
        v = seeds[i]
        if not visited[v]:
            visited[v] = 1
            stack[top] = <cnp.int32_t> v
            top += 1
    while top > 0:
        top -= 1
        v = stack[top]
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            if not visited[u]:
                visited[u] = 1
                stack[top] = <cnp.int32_t> u
                top += 1
    return visited_arr


def saved_weight(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                 Py_ssize_t n, cnp.int64_t[::1] weights,
                 cnp.int32_t[::1] seeds):
    cdef cnp.uint8_t[::1] visited = reachable_mask(indptr, indices, n, seeds)
    cdef cnp.int64_t total = 0
    cdef Py_ssize_t i
    for i in range(n):
        if not visited[i]:
            total += weights[i]
    return int(total)


def ldp(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices, Py_ssize_t n):
    out_arr = np.zeros((n, 5), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef Py_ssize_t v, j
    cdef double d, nd, lo, hi, s, s2, mean, var

    for v in range(n):
        d = indptr[v + 1] - indptr[v]
        out[v, 0] = d
        if d == 0:
            continue
        lo = 1e300
        hi = -1e300
        s = 0.0
        s2 = 0.0
        for j in range(indptr[v], indptr[v + 1]):
            nd = indptr[indices[j] + 1] - indptr[indices[j]]
            if nd < lo:
                lo = nd
            if nd > hi:
                hi = nd
            s += nd
            s2 += nd * nd
        mean = s / d
        var = s2 / d - mean * mean
        if var < 0.0:
            var = 0.0
        out[v, 1] = lo
        out[v, 2] = hi
        out[v, 3] = mean
        out[v, 4] = sqrt(var)
    return out_arr
