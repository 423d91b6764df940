# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: banded LDL^T factor/solve and cyclic Jacobi."""

from libc.math cimport fabs, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def ldlt_factor(double[:, ::1] ab, double pivtol):
    """Factor a symmetric banded matrix in place as L D L^T.

    ``ab[j, i]`` holds A[j+i, j] for i = 0..b (lower band by column).  On
    return row j carries d_j in slot 0 and the L subdiagonals in slots 1..b.
    Returns ``(inertia, badcol)`` where inertia counts negative pivots and
    ``badcol`` is the first column with |pivot| <= pivtol * diagscale
    (-1 when the factorization completed).
    """
    cdef Py_ssize_t n = ab.shape[0]
    cdef Py_ssize_t b = ab.shape[1] - 1
    cdef Py_ssize_t j, i, k, m
    cdef double d, scale = 0.0, lk_d
    cdef Py_ssize_t inertia = 0

    for j in range(n):
        if fabs(ab[j, 0]) > scale:
            scale = fabs(ab[j, 0])
    if scale == 0.0:
        scale = 1.0

    for j in range(n):
        d = ab[j, 0]
        if fabs(d) <= pivtol * scale:
            return inertia, j
        if d < 0.0:
            inertia += 1
        m = b
        if j + m > n - 1:
            m = n - 1 - j
        for i in range(1, m + 1):
            ab[j, i] /= d
        for k in range(1, m + 1):
            lk_d = ab[j, k] * d
            for i in range(k, m + 1):
                ab[j + k, i - k] -= ab[j, i] * lk_d
    return inertia, -1


def ldlt_solve(double[:, ::1] fac, double[:, ::1] x):
    """Solve L D L^T X = B in place; ``x`` is (n, nrhs) C-contiguous."""
    cdef Py_ssize_t n = fac.shape[0]
    cdef Py_ssize_t b = fac.shape[1] - 1
    cdef Py_ssize_t nrhs = x.shape[1]
    cdef Py_ssize_t j, i, r, m
    cdef double lj, d, acc

    for j in range(n):
        m = b
        if j + m > n - 1:
            m = n - 1 - j
        for i in range(1, m + 1):
            lj = fac[j, i]
            if lj != 0.0:
                for r in range(nrhs):
                    x[j + i, r] -= lj * x[j, r]
    for j in range(n):
        d = fac[j, 0]
        for r in range(nrhs):
            x[j, r] /= d
    for j in range(n - 2, -1, -1):
        m = b
        if j + m > n - 1:
            m = n - 1 - j
        for r in range(nrhs):
            acc = x[j, r]
            for i in range(1, m + 1):
                acc -= fac[j, i] * x[j + i, r]
            x[j, r] = acc
    return None


def jacobi_eigh(double[:, ::1] a, double[:, ::1] v, double tol, int max_sweeps):
    """Cyclic Jacobi diagonalization of the symmetric matrix ``a`` in place.

    ``v`` must be the identity on entry and accumulates the rotations
    (columns are eigenvectors).  Returns the number of sweeps used, or -1
    when the off-diagonal norm failed to drop below tol * ||A||_F.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, i
    cdef int sweep
    cdef double off, fnorm, apq, app, aqq, theta, t, c, s, aip, aiq, vip, viq

    fnorm = 0.0
    for p in range(n):
        for q in range(n):
            fnorm += a[p, q] * a[p, q]
    fnorm = sqrt(fnorm)
    if fnorm == 0.0:
        return 0

    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if sqrt(2.0 * off) <= tol * fnorm:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = 0.5 * (aqq - app) / apq
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for i in range(n):
                    if i != p and i != q:
                        aip = a[i, p]
                        aiq = a[i, q]
                        a[i, p] = c * aip - s * aiq
                        a[i, q] = s * aip + c * aiq
                        a[p, i] = a[i, p]
                        a[q, i] = a[i, q]
                for i in range(n):
                    vip = v[i, p]
                    viq = v[i, q]
                    v[i, p] = c * vip - s * viq
                    v[i, q] = s * vip + c * viq
    off = 0.0
    for p in range(n - 1):
        for q in range(p + 1, n):
            off += a[p, q] * a[p, q]
    if sqrt(2.0 * off) <= tol * fnorm:
        return max_sweeps
    return -1
