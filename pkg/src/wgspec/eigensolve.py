"""Symmetric banded linear algebra and the spectral solvers built on it.

Everything below the essential threshold is found by shift-invert Lanczos
with full reorthogonalization on top of a hand-rolled banded LDL^T; the
inertia of the factorization certifies completeness.  The deflated solve
(resolvent restricted to the orthogonal complement of an eigenspace) goes
through a sparse LU of the bordered saddle system.  A cyclic-Jacobi dense
oracle cross-checks everything on small grids.

Inner products carry the h^2 cell weight so discrete norms approximate the
continuum ones; eigenvectors are returned with h^2-weighted unit norm.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import jacobi_eigh, ldlt_factor, ldlt_solve
from .errors import (
    DeflationDefectError,
    IncompleteBasisError,
    InvalidArgumentError,
    NearSingularError,
    ShiftRejectedError,
    SolverError,
)

LANCZOS_SEED = 0x5EED
PIVOT_TOL = 1e-13
RESIDUAL_RTOL = 1e-9


def weighted_dot(grid, u, v):
    return grid.h**2 * float(np.dot(u, v))


def weighted_norm(grid, u):
    return grid.h * float(np.linalg.norm(u))


@dataclass
class BandedFactorization:
    """LDL^T factors of H - shift*I with the Sylvester inertia count."""

    factors: np.ndarray = field(repr=False)
    shift: float
    inertia: int
    bandwidth: int

    def solve(self, b):
        return ldlt_solve(self.factors, b)


def banded_factorize(op, shift):
    """Factor H - shift*I; raises ShiftRejectedError on a near-zero pivot."""
    if op.blocks:
        raise InvalidArgumentError(
            "operator carries a dense coupling block; banded path unavailable"
        )
    ab = op.band.copy()
    ab[:, 0] -= shift
    fac, inertia, badcol = ldlt_factor(ab, PIVOT_TOL)
    if badcol >= 0:
        raise ShiftRejectedError(shift, badcol)
    return BandedFactorization(
        factors=fac, shift=shift, inertia=inertia, bandwidth=op.bandwidth
    )


def factorize_with_nudge(op, shift, tries=6):
    """Factor near ``shift``, nudging by 1e-10 (1 + |shift|) on rejection."""
    delta = 1e-10 * (1.0 + abs(shift))
    for attempt in range(tries):
        try:
            return banded_factorize(op, shift + attempt * delta)
        except ShiftRejectedError:
            continue
    raise ShiftRejectedError(shift, -1)


@dataclass
class SpectralResult:
    """Eigenpairs below the ceiling, ascending, h^2-orthonormal vectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)  # (n, k) columns
    residuals: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def count(self):
        return len(self.eigenvalues)


def _tridiag_eigh(alphas, betas):
    k = len(alphas)
    T = np.diag(alphas)
    if k > 1:
        T += np.diag(betas[: k - 1], 1) + np.diag(betas[: k - 1], -1)
    return np.linalg.eigh(T)


def lowest_eigenpairs(op, k, ceiling, seed=LANCZOS_SEED, max_basis=200, rtol=RESIDUAL_RTOL):
    """All eigenpairs below ``ceiling`` (at most k), inertia-certified.

    Shift-invert Lanczos at the ceiling with full (twice-repeated)
    reorthogonalization; restarts with fresh deterministic vectors recover
    missed degenerate copies.
    """
    grid = op.grid
    fac = factorize_with_nudge(op, ceiling)
    m = fac.inertia
    if m == 0:
        return SpectralResult(
            eigenvalues=np.zeros(0),
            eigenvectors=np.zeros((op.n, 0)),
            residuals=np.zeros(0),
            meta={"inertia": 0, "shift": fac.shift, "iterations": 0, "seed": seed},
        )
    if m > k:
        raise IncompleteBasisError(m, k)

    n = op.n
    sigma = fac.shift
    rng = np.random.Generator(np.random.PCG64(seed))
    Q = np.zeros((n, min(max_basis, n)))
    alphas, betas = [], []
    total_iters = 0

    def new_start():
        v = rng.standard_normal(n)
        for _ in range(2):
            if alphas:
                v -= Q[:, : len(alphas)] @ (Q[:, : len(alphas)].T @ v)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            raise SolverError("degenerate start vector")
        return v / nv

    def ritz_candidates():
        theta, S = _tridiag_eigh(np.array(alphas), np.array(betas))
        order = np.argsort(theta)
        want = order[:m]
        # wanted eigenvalues lie below sigma: theta = 1/(lam - sigma) < 0
        if np.any(theta[want] >= 0):
            return None
        X = Q[:, : len(alphas)] @ S[:, want]
        lam = sigma + 1.0 / theta[want]
        return lam, X, np.abs(S[-1, want])

    q = new_start()
    restarts = 0
    final = None
    while final is None:
        j = len(alphas)
        if j >= Q.shape[1]:
            raise SolverError(
                f"Lanczos basis cap {Q.shape[1]} reached with {m} eigenpairs wanted"
            )
        Q[:, j] = q
        u = fac.solve(q)
        alpha = float(q @ u)
        u -= alpha * q
        if j > 0:
            u -= betas[-1] * Q[:, j - 1]
        # full reorthogonalization, twice for safety
        for _ in range(2):
            u -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ u)
        beta = float(np.linalg.norm(u))
        alphas.append(alpha)
        total_iters += 1

        if j + 1 >= m:
            cand = ritz_candidates()
            if cand is not None:
                lam_c, X_c, last = cand
                cheap = beta * last  # residual bound in the inverted operator
                if np.all(cheap <= 1e-4 * rtol) or (j + 1) % 10 == 0:
                    ok = True
                    for i in range(m):
                        x = X_c[:, i] / weighted_norm(grid, X_c[:, i])
                        r = op.matvec(x) - lam_c[i] * x
                        if weighted_norm(grid, r) > rtol * (abs(lam_c[i]) + 1.0):
                            ok = False
                            break
                    if ok:
                        final = (lam_c, X_c)
        if final is not None:
            break
        if beta < 1e-12:
            restarts += 1
            if restarts > 3:
                raise SolverError("Lanczos stalled: invariant subspace too small")
            q = new_start()
            betas.append(0.0)
        else:
            q = u / beta
            betas.append(beta)

    lam, X = final
    order = np.argsort(lam)
    lam = lam[order]
    X = X[:, order]
    residuals = np.zeros(m)
    for i in range(m):
        X[:, i] /= weighted_norm(grid, X[:, i])
        r = op.matvec(X[:, i]) - lam[i] * X[:, i]
        residuals[i] = weighted_norm(grid, r)
    count_below = int(np.sum(lam < ceiling))
    if count_below != m:
        raise SolverError(f"inertia {m} disagrees with {count_below} converged eigenvalues")
    return SpectralResult(
        eigenvalues=lam,
        eigenvectors=X,
        residuals=residuals,
        meta={"inertia": m, "shift": sigma, "iterations": total_iters, "seed": seed},
    )


class ResolventSolver:
    """Repeated solves of (H - lam) u = f at a fixed regular lam."""

    def __init__(self, op, lam, refine=2):
        self.op = op
        self.lam = lam
        self.refine = refine
        try:
            self.fac = banded_factorize(op, lam)
        except ShiftRejectedError as exc:
            raise NearSingularError(f"lam={lam} too close to the spectrum") from exc

    def solve(self, f, rtol=1e-10):
        f = np.asarray(f, dtype=float)
        norm_f = np.linalg.norm(f)
        if norm_f == 0.0:
            return np.zeros_like(f)
        u = self.fac.solve(f)
        for _ in range(self.refine):
            r = f - (self.op.matvec(u) - self.lam * u)
            if np.linalg.norm(r) <= rtol * norm_f:
                return u
            u += self.fac.solve(r)
        r = f - (self.op.matvec(u) - self.lam * u)
        if np.linalg.norm(r) > rtol * norm_f:
            raise NearSingularError(
                f"iterative refinement stalled at relative residual "
                f"{np.linalg.norm(r) / norm_f:.2e} (lam={self.lam})"
            )
        return u


def resolvent_solve(op, lam, f, rtol=1e-10):
    return ResolventSolver(op, lam).solve(f, rtol=rtol)


class DeflatedSolver:
    """Resolvent at an eigenvalue, restricted to the eigenspace complement.

    Solves the bordered saddle system [[H - lam, Psi], [Psi^T, 0]] with a
    sparse LU; the right-hand side is projected off span(Psi) first and the
    solution certificate (orthogonality and residual) is checked on exit.
    """

    def __init__(self, op, lam, Psi):
        import scipy.sparse as sp
        import scipy.sparse.linalg as spla

        self.op = op
        self.lam = lam
        self.grid = op.grid
        self.Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
        if self.Psi.shape[0] != op.n:
            self.Psi = self.Psi.T
        n, p = self.Psi.shape
        K = _band_to_sparse(op, lam)
        W = sp.csc_matrix(self.Psi)
        Z = sp.csc_matrix((p, p))
        aug = sp.bmat([[K, W], [W.T, Z]], format="csc")
        try:
            self.lu = spla.splu(aug)
        except RuntimeError as exc:
            raise DeflationDefectError(f"saddle factorization failed: {exc}") from exc
        self.p = p

    def solve(self, f, rtol=1e-9):
        grid = self.grid
        f = np.asarray(f, dtype=float)
        coef = grid.h**2 * (self.Psi.T @ f)
        ftil = f - self.Psi @ coef
        rhs = np.concatenate([ftil, np.zeros(self.p)])
        sol = self.lu.solve(rhs)
        u = sol[: -self.p]
        u -= self.Psi @ (grid.h**2 * (self.Psi.T @ u))
        res = self.op.matvec(u) - self.lam * u - ftil
        norm_f = weighted_norm(grid, f)
        if norm_f > 0 and weighted_norm(grid, res) > rtol * norm_f:
            raise DeflationDefectError(
                f"deflated residual {weighted_norm(grid, res) / norm_f:.2e} "
                f"exceeds {rtol:.0e} (eigenspace incomplete?)"
            )
        ortho = np.abs(grid.h**2 * (self.Psi.T @ u)).max() if self.p else 0.0
        if ortho > 1e-11:
            raise DeflationDefectError(f"deflated solution not orthogonal: {ortho:.2e}")
        return u


def deflated_solve(op, lam, Psi, f, rtol=1e-9):
    return DeflatedSolver(op, lam, Psi).solve(f, rtol=rtol)


def _band_to_sparse(op, shift):
    import scipy.sparse as sp

    n = op.n
    rows, cols, vals = [], [], []
    band = op.band
    for i in range(op.bandwidth + 1):
        c = band[: n - i, i].copy()
        if i == 0:
            c = c - shift
        idx = np.nonzero(c)[0] if i else np.arange(n)
        rows.append(idx + i)
        cols.append(idx)
        vals.append(c[idx])
        if i:
            rows.append(idx)
            cols.append(idx + i)
            vals.append(c[idx])
    for idx, M in op.blocks:
        r, c = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(M.ravel())
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


DENSE_ORACLE_CAP = 2500


def dense_eig_oracle(op, cap=DENSE_ORACLE_CAP):
    """Full spectrum by cyclic Jacobi; test oracle for grids up to 2500 nodes."""
    if op.n > cap:
        raise InvalidArgumentError(f"dense oracle refused: {op.n} > {cap} unknowns")
    A = op.to_dense()
    w, V = jacobi_eigh(A)
    grid = op.grid
    residuals = np.zeros(len(w))
    for i in range(V.shape[1]):
        V[:, i] /= weighted_norm(grid, V[:, i])
        residuals[i] = weighted_norm(grid, A @ V[:, i] - w[i] * V[:, i])
    return SpectralResult(
        eigenvalues=w, eigenvectors=V, residuals=residuals, meta={"solver": "jacobi"}
    )
