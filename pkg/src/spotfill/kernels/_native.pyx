# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels. Contracts mirror _numpy.py exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "native"


def nearest_neighbors(cnp.ndarray[cnp.float64_t, ndim=2] a,
                      cnp.ndarray[cnp.float64_t, ndim=2] b):
    """Both-direction nearest-neighbor indices in one pass over the pair grid."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx_ab = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx_ba = np.zeros(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_ba = np.full(m, np.inf)
    cdef double[:, ::1] av = np.ascontiguousarray(a)
    cdef double[:, ::1] bv = np.ascontiguousarray(b)
    cdef long long[::1] iab = idx_ab
    cdef long long[::1] iba = idx_ba
    cdef double[::1] bba = best_ba
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d, best
    cdef Py_ssize_t arg
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(m):
            dx = av[i, 0] - bv[j, 0]
            dy = av[i, 1] - bv[j, 1]
            dz = av[i, 2] - bv[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
                arg = j
            if d < bba[j]:
                bba[j] = d
                iba[j] = i
        iab[i] = arg
    return idx_ab, idx_ba


def farthest_point_sample(cnp.ndarray[cnp.float64_t, ndim=2] points, Py_ssize_t count):
    cdef Py_ssize_t n = points.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] selected = np.zeros(count, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] pv = np.ascontiguousarray(points)
    cdef long long[::1] sel = selected
    cdef double[::1] dv = dist
    cdef Py_ssize_t i, j, nxt
    cdef double dx, dy, dz, d, best
    cdef double px, py, pz
    px = pv[0, 0]; py = pv[0, 1]; pz = pv[0, 2]
    for j in range(n):
        dx = pv[j, 0] - px
        dy = pv[j, 1] - py
        dz = pv[j, 2] - pz
        dv[j] = dx * dx + dy * dy + dz * dz
    dv[0] = -1.0
    sel[0] = 0
    for i in range(1, count):
        best = dv[0]
        nxt = 0
        for j in range(1, n):
            if dv[j] > best:
                best = dv[j]
                nxt = j
        sel[i] = nxt
        px = pv[nxt, 0]; py = pv[nxt, 1]; pz = pv[nxt, 2]
        for j in range(n):
            dx = pv[j, 0] - px
            dy = pv[j, 1] - py
            dz = pv[j, 2] - pz
            d = dx * dx + dy * dy + dz * dz
            if d < dv[j]:
                dv[j] = d
        dv[nxt] = -1.0
    return selected


def ball_query(cnp.ndarray[cnp.float64_t, ndim=2] query,
               cnp.ndarray[cnp.float64_t, ndim=2] source,
               double radius, Py_ssize_t max_samples):
    cdef Py_ssize_t nq = query.shape[0], ns = source.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] indices = np.zeros((nq, max_samples), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(nq, dtype=np.int64)
    cdef double[:, ::1] qv = np.ascontiguousarray(query)
    cdef double[:, ::1] sv = np.ascontiguousarray(source)
    cdef long long[:, ::1] iv = indices
    cdef long long[::1] cv = counts
    cdef double r2 = radius * radius
    cdef Py_ssize_t i, j, k, nearest
    cdef double dx, dy, dz, d, best
    for i in range(nq):
        k = 0
        best = np.inf
        nearest = 0
        for j in range(ns):
            dx = qv[i, 0] - sv[j, 0]
            dy = qv[i, 1] - sv[j, 1]
            dz = qv[i, 2] - sv[j, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < best:
                best = d
                nearest = j
            if d < r2 and k < max_samples:
                iv[i, k] = j
                k += 1
        cv[i] = k
        if k == 0:
            for j in range(max_samples):
                iv[i, j] = nearest
        else:
            for j in range(k, max_samples):
                iv[i, j] = iv[i, 0]
    return indices, counts
