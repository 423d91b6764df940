"""Cross-well coupling operators, the p x p interaction matrix and the
closed-form eigenvalue predictors.

Both single-perturbation operators live on a common long grid with the
perturbation at 0; cross terms shift fields by the support distance 2l
(an exact integer number of columns) before applying the other side's
perturbation.  The (I + correction)^{-1} is applied by a Neumann fixed
point whose measured contraction ratio certifies the regime; the dense
support-box assembly was rejected on cost grounds (one full-grid solve per
box node).

Sign conventions are pinned empirically against direct solves: with both
far-field amplitudes positive, the off-diagonal entry for a shared
eigenvalue is negative (the lower root pairs with the even combination),
and the one-sided diagonal entry is -2 s1 beta^2 btilde e^{-4 l s1} in the
convention returned by extract_beta_tilde.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeometryError,
    InvalidArgumentError,
    ReductionRegimeError,
    SolverError,
)
from .eigensolve import DeflatedSolver, ResolventSolver, weighted_norm
from .stripgrid import assemble_limiting, assemble_perturbation
from .transverse import transverse_nu


@dataclass
class CouplingSide:
    """One limiting problem prepared for coupling-matrix assembly."""

    side: str                     # '-' or '+'
    spec: object
    grid: object
    op: object
    pert: object
    lam: float | None             # the shared eigenvalue, None when p = 0
    vectors: np.ndarray = field(repr=False)  # rotated eigenvectors (n, p)
    beta: float | None = None

    def __post_init__(self):
        self._resolvents = {}
        self._deflated = {}

    @property
    def p(self):
        return self.vectors.shape[1] if self.vectors.ndim == 2 else 0

    def resolvent(self, lam):
        if lam not in self._resolvents:
            self._resolvents[lam] = ResolventSolver(self.op, lam)
        return self._resolvents[lam]

    def deflated(self, lam):
        if lam not in self._deflated:
            self._deflated[lam] = DeflatedSolver(self.op, lam, self.vectors)
        return self._deflated[lam]


def make_coupling_side(spec, grid, side, group=None):
    """Assemble one side's operators; group carries the rotated eigenspace."""
    op = assemble_limiting(grid, spec)
    pert = assemble_perturbation(grid, spec, 0.0)
    if group is None:
        vectors = np.zeros((grid.n, 0))
        lam = beta = None
    else:
        vectors = group.vectors
        lam = group.lam
        beta = group.beta
    return CouplingSide(
        side=side, spec=spec, grid=grid, op=op, pert=pert, lam=lam,
        vectors=vectors, beta=beta,
    )


def _shift_columns(u, grid, delta_cols, needed_cols):
    """w with w[col i] = u[col i + delta] on the needed columns, 0 elsewhere."""
    Ny = grid.Ny
    w = np.zeros(grid.n)
    for i in needed_cols:
        j = i + delta_cols
        if j < 0 or j >= grid.Nx:
            raise GeometryError("column shift exceeds the grid")
        w[i * Ny : (i + 1) * Ny] = u[j * Ny : (j + 1) * Ny]
    return w


def _column_shift(grid, l):
    delta = 2.0 * l / grid.h
    di = int(round(delta))
    if abs(delta - di) > 1e-8:
        raise GeometryError(f"2l={2*l} is not an integer number of columns (h={grid.h})")
    return di


def _support_cols(side):
    reach = side.spec.a + 2.0 * side.grid.h
    return [i for i, x in enumerate(side.grid.xs) if abs(x) <= reach]


def _cross_apply(this, other, l, solve):
    """f on the other side -> L_this [ shifted resolvent image ] on this side."""
    cols = _support_cols(this)
    # '-' output reads the other-side field at x - 2l; '+' at x + 2l
    delta = _column_shift(this.grid, l) * (1 if this.side == "+" else -1)

    def apply(f_other):
        u = solve(f_other)
        w = _shift_columns(u, this.grid, delta, cols)
        return this.pert.matvec(w)

    return apply


def apply_T6(this, other, lam, l, f):
    """Cross coupling through the other side's regular resolvent."""
    return _cross_apply(this, other, l, other.resolvent(lam).solve)(f)


def apply_T7(this, other, lam, l, f):
    """Cross coupling through the other side's deflated resolvent."""
    if other.p == 0:
        raise InvalidArgumentError("deflated cross coupling needs an eigenspace")
    return _cross_apply(this, other, l, other.deflated(lam).solve)(f)


def build_phi_vectors(side_minus, side_plus, l):
    """Source pairs: shifted eigenfunctions pushed through the far side's
    perturbation; first the minus-side family, then the plus-side one."""
    phis = []
    delta = _column_shift(side_minus.grid, l)
    cols_p = _support_cols(side_plus)
    for i in range(side_minus.p):
        w = _shift_columns(side_minus.vectors[:, i], side_plus.grid, delta, cols_p)
        phis.append((np.zeros(side_minus.grid.n), side_plus.pert.matvec(w)))
    cols_m = _support_cols(side_minus)
    for i in range(side_plus.p):
        w = _shift_columns(side_plus.vectors[:, i], side_minus.grid, -delta, cols_m)
        phis.append((side_minus.pert.matvec(w), np.zeros(side_plus.grid.n)))
    return phis


def _pair_norm(grid, pair):
    return float(np.hypot(weighted_norm(grid, pair[0]), weighted_norm(grid, pair[1])))


def _t3_apply(side_minus, side_plus, lam, l):
    """The holomorphic remainder of the cross coupling at lam (case split on
    which sides carry the eigenvalue)."""
    def t3(pair):
        fm, fp = pair
        if side_minus.p > 0:
            out_p = apply_T7(side_plus, side_minus, side_minus.lam, l, fm)
        else:
            out_p = apply_T6(side_plus, side_minus, lam, l, fm)
        if side_plus.p > 0:
            out_m = apply_T7(side_minus, side_plus, side_plus.lam, l, fp)
        else:
            out_m = apply_T6(side_minus, side_plus, lam, l, fp)
        return (out_m, out_p)

    return t3


@dataclass
class CouplingMatrix:
    """Interaction matrix at the shared eigenvalue, with roots and vectors."""

    lam_star: float
    l: float
    p_minus: int
    p_plus: int
    entries: np.ndarray
    contraction: float            # measured Neumann ratio (~ norm of the remainder)
    roots: np.ndarray = None
    vectors: np.ndarray = None    # columns k_i matched to roots

    @property
    def p(self):
        return self.p_minus + self.p_plus

    def to_json_dict(self):
        return {
            "lam_star": self.lam_star,
            "l": self.l,
            "p_minus": self.p_minus,
            "p_plus": self.p_plus,
            "entries": [[float(v) for v in row] for row in self.entries],
            "contraction": self.contraction,
            "roots": [float(t) for t in self.roots],
            "vectors": [[float(v) for v in col] for col in self.vectors.T],
        }


def coupling_matrix(side_minus, side_plus, lam_star, l, tol=1e-14, max_terms=40):
    """Assemble A at the shared eigenvalue and distance l.

    Each column applies (I + T3)^{-1} to a source pair by Neumann iteration;
    a measured contraction ratio above 1/2 aborts with a regime error.
    """
    p_m, p_p = side_minus.p, side_plus.p
    p = p_m + p_p
    if p == 0:
        raise InvalidArgumentError("no eigenspace on either side")
    grid = side_minus.grid
    t3 = _t3_apply(side_minus, side_plus, lam_star, l)
    phis = build_phi_vectors(side_minus, side_plus, l)

    def t1(i, pair):
        if i < p_m:
            return grid.h**2 * float(side_minus.vectors[:, i] @ pair[0])
        return grid.h**2 * float(side_plus.vectors[:, i - p_m] @ pair[1])

    A = np.zeros((p, p))
    worst_ratio = 0.0
    for j, phi in enumerate(phis):
        base = _pair_norm(grid, phi)
        total = (phi[0].copy(), phi[1].copy())
        term = phi
        prev = base
        if base > 0.0:
            for _ in range(max_terms):
                tm, tp = t3(term)
                term = (-tm, -tp)
                tn = _pair_norm(grid, term)
                total = (total[0] + term[0], total[1] + term[1])
                if prev > 0.0:
                    ratio = tn / prev
                    worst_ratio = max(worst_ratio, ratio)
                    if ratio > 0.5 and tn > 10 * tol * base:
                        raise ReductionRegimeError(
                            f"coupling correction not contractive (ratio {ratio:.2f}); "
                            f"separation l={l} too small"
                        )
                prev = tn
                if tn <= tol * base:
                    break
            else:
                raise ReductionRegimeError("coupling fixed point did not converge")
        for i in range(p):
            A[i, j] = t1(i, total)
    if not np.all(np.isfinite(A)):
        raise SolverError("coupling assembly produced non-finite entries")
    mat = CouplingMatrix(
        lam_star=lam_star, l=l, p_minus=p_m, p_plus=p_p, entries=A,
        contraction=worst_ratio,
    )
    mat.roots = tau_roots(mat)
    scale = max(np.abs(A).max(), 1e-300)
    cols = []
    i = 0
    while i < len(mat.roots):
        j = i + 1
        while j < len(mat.roots) and abs(mat.roots[j] - mat.roots[i]) <= 1e-10 * scale:
            j += 1
        vecs = eigvec_coeffs(mat, lam_star + mat.roots[i])
        for r in range(i, j):
            cols.append(vecs[min(r - i, len(vecs) - 1)])
        i = j
    mat.vectors = np.column_stack(cols)
    return mat


def _char_poly(A):
    """Monic characteristic coefficients of det(tau E - A), Faddeev-LeVerrier."""
    p = A.shape[0]
    M = np.eye(p)
    coeffs = [1.0]
    for k in range(1, p + 1):
        M = A @ M
        ck = -np.trace(M) / k
        coeffs.append(ck)
        M += ck * np.eye(p)
    return np.array(coeffs)


def _durand_kerner(coeffs, max_iter=200, tol=1e-14):
    p = len(coeffs) - 1
    scale = 1.0 + float(np.abs(coeffs).max())
    z = scale * (0.4 + 0.9j) ** np.arange(1, p + 1)
    for _ in range(max_iter):
        moved = 0.0
        for i in range(p):
            num = np.polyval(coeffs, z[i])
            den = np.prod([z[i] - z[j] for j in range(p) if j != i])
            if den == 0:
                den = 1e-300
            step = num / den
            z[i] -= step
            moved = max(moved, abs(step))
        if moved <= tol * scale:
            return z
    resid = np.abs(np.polyval(coeffs, z)).max()
    if resid > 1e-8 * scale**p:
        raise SolverError(f"root finder stalled, residual {resid:.2e}")
    return z


def tau_roots(A):
    """Roots of det(tau E - A), ordered by modulus (ties: value ascending)."""
    M = np.asarray(A.entries if isinstance(A, CouplingMatrix) else A, dtype=float)
    p = M.shape[0]
    if p > 6:
        raise InvalidArgumentError(f"p={p} beyond the supported block size 6")
    if p == 1:
        roots = np.array([M[0, 0]])
    elif p == 2:
        tr = M[0, 0] + M[1, 1]
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        disc = tr * tr - 4.0 * det
        if disc < 0 and disc > -1e-14 * max(tr * tr, 1.0):
            disc = 0.0
        sq = np.sqrt(disc)
        roots = np.array([(tr - sq) / 2.0, (tr + sq) / 2.0])
    else:
        z = _durand_kerner(_char_poly(M))
        scale = np.abs(z).max() or 1.0
        if np.abs(z.imag).max() > 1e-8 * (1.0 + scale):
            raise SolverError("complex roots for a symmetric block")
        roots = z.real
    order = sorted(range(len(roots)), key=lambda i: (abs(roots[i]), roots[i]))
    return np.array([roots[i] for i in order])


def eigvec_coeffs(A, lam_i, null_tol=1e-8):
    """Unit null vectors of (lam_i - lam_star) E - A at a matched root.

    The smallest-singular directions of the shifted matrix, accepted when
    their residual satisfies ||B k|| <= null_tol ||A||; all independent
    directions are returned when the root is multiple.  The dominant
    component is made positive for determinism.
    """
    M = np.asarray(A.entries, dtype=float)
    if not np.all(np.isfinite(M)) or not np.isfinite(lam_i):
        raise SolverError("non-finite interaction matrix")
    p = M.shape[0]
    B = (lam_i - A.lam_star) * np.eye(p) - M
    scale = max(np.abs(M).max(), abs(lam_i - A.lam_star), 1e-300)
    _, s, Vt = np.linalg.svd(B)
    small = s <= null_tol * scale
    if not small.any():
        raise SolverError(
            f"no null direction at root {lam_i - A.lam_star:.3e} "
            f"(smallest singular value {s[-1]:.2e}, scale {scale:.2e})"
        )
    out = []
    for row in Vt[small]:
        v = row / np.linalg.norm(row)
        lead = np.argmax(np.abs(v))
        if v[lead] < 0:
            v = -v
        out.append(v)
    return out


def synthesize_eigenfunction(k_vec, side_minus, side_plus, l, grid):
    """Shifted superposition of the two limiting eigenbases, h^2-normalized."""
    Ny = grid.Ny
    if Ny != side_minus.grid.Ny or abs(grid.h - side_minus.grid.h) > 1e-14:
        raise GeometryError("target grid incompatible with the limiting grids")
    dl = l / grid.h
    di = int(round(dl))
    if abs(dl - di) > 1e-8:
        raise GeometryError("l is not an integer number of columns")
    out = np.zeros(grid.n)
    k_vec = np.asarray(k_vec, dtype=float)

    def add(side, coeffs, shift_cols):
        src = side.grid
        for i_t in range(grid.Nx):
            j = i_t - grid.center_col + shift_cols + src.center_col
            if 0 <= j < src.Nx:
                block = side.vectors[j * Ny : (j + 1) * Ny, :] @ coeffs
                out[i_t * Ny : (i_t + 1) * Ny] += block

    p_m = side_minus.p
    if p_m:
        add(side_minus, k_vec[:p_m], +di)
    if side_plus.p:
        add(side_plus, k_vec[p_m:], -di)
    nrm = weighted_norm(grid, out)
    if nrm == 0.0:
        raise InvalidArgumentError("zero synthesized field")
    return out / nrm


@dataclass
class AsymptoticPrediction:
    """Predicted perturbed eigenvalues near one limiting eigenvalue."""

    lam_star: float
    lambdas: list
    method: str
    gap: float | None
    error_order: str

    def to_json_dict(self):
        return {
            "lam_star": self.lam_star,
            "lambdas": [float(v) for v in self.lambdas],
            "method": self.method,
            "gap": None if self.gap is None else float(self.gap),
            "error_order": self.error_order,
        }


def predict_thm_matrix(lam_star, A):
    """First-order eigenvalues from the interaction-matrix roots."""
    lams = [lam_star + t for t in A.roots]
    gap = lams[-1] - lams[-2] if len(lams) >= 2 else None
    return AsymptoticPrediction(
        lam_star=lam_star,
        lambdas=lams,
        method="matrix-A",
        gap=gap,
        error_order=f"l^(2/{A.p}) exp(-4 l s1 / {A.p})",
    )


def predict_two_sided(lam_star, beta_minus, beta_plus, nu1, l, p=2):
    """Symmetric leading splitting when both sides share the eigenvalue."""
    s1 = float(np.sqrt(nu1 - lam_star))
    delta = 2.0 * abs(beta_minus * beta_plus) * s1 * np.exp(-2.0 * l * s1)
    lams = [lam_star] * (p - 2) + [lam_star - delta, lam_star + delta]
    return AsymptoticPrediction(
        lam_star=lam_star,
        lambdas=lams,
        method="two-sided",
        gap=2.0 * delta,
        error_order="l exp(-4 l s1)",
    )


def predict_one_sided(lam_star, beta, beta_tilde, nu1, l, side="-", p=1):
    """Leading level shift when only one side carries the eigenvalue.

    beta_tilde uses the extract_beta_tilde sign convention, under which the
    shifted level is lam_star - 2 s1 |beta|^2 beta_tilde e^{-4 l s1}.
    """
    s1 = float(np.sqrt(nu1 - lam_star))
    shift = -2.0 * s1 * beta * beta * beta_tilde * np.exp(-4.0 * l * s1)
    lams = [lam_star] * (p - 1) + [lam_star + shift]
    return AsymptoticPrediction(
        lam_star=lam_star,
        lambdas=lams,
        method="one-sided",
        gap=None,
        error_order="exp(-2 l (s1+s2)) + l^2 exp(-6 l s1)",
    )


def coupling_margin_rule(l, a, lam_star_est, d):
    """Half-length for the limiting grids backing the coupling at distance l."""
    nu1 = transverse_nu(d, 1)
    s1 = float(np.sqrt(max(nu1 - lam_star_est, 1e-12)))
    return 2.0 * l + a + max(8.0, 10.0 / s1)
