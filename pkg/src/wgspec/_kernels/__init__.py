"""Kernel selection: compiled extension when available, NumPy fallback otherwise.

Set WGSPEC_PURE_PYTHON=1 to force the fallback (used by the benchmark and by
tests that compare the two implementations).
"""

import os

import numpy as np

from . import _purepy

try:
    from . import _native
except ImportError:
    _native = None

if _native is not None and os.environ.get("WGSPEC_PURE_PYTHON", "0") != "1":
    _impl = _native
    IMPL = "compiled"
else:
    _impl = _purepy
    IMPL = "python"


def implementations():
    """Mapping of available kernel implementations, for benchmarks/tests."""
    impls = {"python": _purepy}
    if _native is not None:
        impls["compiled"] = _native
    return impls


def ldlt_factor(ab, pivtol=1e-13, impl=None):
    """Factor a symmetric banded matrix (lower band by column) as L D L^T.

    ``ab`` has shape (n, b+1) with ab[j, i] = A[j+i, j]; it is overwritten
    with the factors (d_j in slot 0, L subdiagonals in slots 1..b).
    Returns (inertia, badcol); badcol >= 0 flags a near-zero pivot and the
    factorization is abandoned at that column.
    """
    ab = np.ascontiguousarray(ab, dtype=np.float64)
    mod = _impl if impl is None else implementations()[impl]
    inertia, badcol = mod.ldlt_factor(ab, float(pivtol))
    return ab, int(inertia), int(badcol)


def ldlt_solve(fac, b, impl=None):
    """Solve L D L^T x = b for one RHS vector or a (n, k) RHS block."""
    mod = _impl if impl is None else implementations()[impl]
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    x = np.ascontiguousarray(b.reshape(b.shape[0], -1).copy())
    mod.ldlt_solve(fac, x)
    return x[:, 0] if squeeze else x


def jacobi_eigh(a, tol=1e-14, max_sweeps=50, impl=None):
    """Full eigendecomposition of a dense symmetric matrix by cyclic Jacobi.

    Returns (w, V) with eigenvalues ascending and eigenvectors in columns.
    Raises RuntimeError when the sweep cap is hit before convergence.
    """
    mod = _impl if impl is None else implementations()[impl]
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    n = a.shape[0]
    v = np.eye(n, dtype=np.float64, order="C")
    sweeps = mod.jacobi_eigh(a, v, float(tol), int(max_sweeps))
    if sweeps < 0:
        raise RuntimeError(f"jacobi_eigh: no convergence in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]
