"""Pure-NumPy implementations of the hot kernels.

Same contracts as the compiled module; used when the extension is not built
or when WGSPEC_PURE_PYTHON=1.  The factorization vectorizes the rank-1 band
update per column; the triangular solves fall back to row-wise loops.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def ldlt_factor(ab, pivtol):
    n, bp1 = ab.shape
    b = bp1 - 1
    scale = float(np.abs(ab[:, 0]).max()) or 1.0
    inertia = 0
    for j in range(n):
        d = ab[j, 0]
        if abs(d) <= pivtol * scale:
            return inertia, j
        if d < 0.0:
            inertia += 1
        m = min(b, n - 1 - j)
        if m == 0:
            continue
        w = ab[j, 1 : m + 1].copy()
        l = w / d
        ab[j, 1 : m + 1] = l
        # trailing update A[j+i, j+k] -= l_i w_k lands on ab[j+k, i-k]; the
        # Hankel view lh[r, c] = l[r+c] (zero padded) covers the slab at once
        lh = sliding_window_view(np.concatenate([l, np.zeros(m)]), m)[:m]
        ab[j + 1 : j + m + 1, 0:m] -= w[:, None] * lh
    return inertia, -1


def ldlt_solve(fac, x):
    n, bp1 = fac.shape
    b = bp1 - 1
    for j in range(n):
        m = min(b, n - 1 - j)
        if m:
            x[j + 1 : j + m + 1] -= np.outer(fac[j, 1 : m + 1], x[j])
    x /= fac[:, 0][:, None]
    for j in range(n - 2, -1, -1):
        m = min(b, n - 1 - j)
        if m:
            x[j] -= fac[j, 1 : m + 1] @ x[j + 1 : j + m + 1]
    return None


def jacobi_eigh(a, v, tol, max_sweeps):
    n = a.shape[0]
    fnorm = float(np.linalg.norm(a))
    if fnorm == 0.0:
        return 0
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * fnorm:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = a[p, p], a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                colp[p] = colp[q] = colq[p] = colq[q] = 0.0
                newp = c * colp - s * colq
                newq = s * colp + c * colq
                newp[p] = a[p, p]
                newq[q] = a[q, q]
                newp[q] = newq[p] = 0.0
                a[:, p] = newp
                a[:, q] = newq
                a[p, :] = newp
                a[q, :] = newq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    off = float(np.linalg.norm(a - np.diag(np.diag(a))))
    if off <= tol * fnorm:
        return max_sweeps
    return -1
